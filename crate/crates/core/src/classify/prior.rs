use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::primitives::{ClipLabel, Distribution};

/// Floor applied to probabilities before taking logs inside EM formulas.
pub const EM_EPS: f64 = 1e-12;

pub const DEFAULT_DELTA: f64 = 1e-4;
pub const DEFAULT_TAU: f64 = 2.0;

/// Dataset-level prior over latent attributes, tracked by EMA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributePrior {
    pub pi: Distribution,
    pub delta: f64,
    pub tau: f64,
}

impl AttributePrior {
    /// Uniform prior over `m + 1` classes.
    pub fn uniform(m: usize, delta: f64, tau: f64) -> Result<Self> {
        ensure!(m >= 1, "need at least one latent attribute");
        ensure!(delta > 0.0 && delta < 1.0, "delta must lie in (0,1), got {delta}");
        ensure!(tau > 0.0, "tau must be positive, got {tau}");
        Ok(Self {
            pi: Distribution::uniform(m + 1),
            delta,
            tau,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.pi.len()
    }
}

/// Posterior over latent attributes for a single clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub probs: Distribution,
}

/// E-step: real clips are pinned to class 0; fake clips spread their mass
/// over the forged attributes by a tempered softmax of `log pi + log q`.
pub fn e_step(q: &Distribution, prior: &AttributePrior, y: ClipLabel) -> Posterior {
    let classes = q.len();
    debug_assert_eq!(classes, prior.num_classes());
    if !y.is_fake() {
        return Posterior {
            probs: Distribution::one_hot(classes, 0),
        };
    }
    let scores: Vec<f64> = (1..classes)
        .map(|c| (prior.pi[c].max(EM_EPS).ln() + q[c].max(EM_EPS).ln()) / prior.tau)
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut probs = Vec::with_capacity(classes);
    probs.push(0.0);
    probs.extend(exps.iter().map(|e| e / z));
    Posterior {
        probs: Distribution::from_raw(probs),
    }
}

/// Column means of a batch of distributions.
pub fn batch_mean(qs: &[Distribution]) -> Vec<f64> {
    let classes = qs[0].len();
    let mut mean = vec![0.0; classes];
    for q in qs {
        for (m, p) in mean.iter_mut().zip(q.probs()) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= qs.len() as f64);
    mean
}

/// EMA update of the prior towards the batch mean, renormalized.
pub fn update_prior(prior: &AttributePrior, qs: &[Distribution]) -> Result<AttributePrior> {
    ensure!(!qs.is_empty(), "update_prior needs a non-empty batch");
    Ok(update_prior_with_mean(prior, &batch_mean(qs)))
}

pub(crate) fn update_prior_with_mean(prior: &AttributePrior, mean: &[f64]) -> AttributePrior {
    let d = prior.delta;
    let raw: Vec<f64> = prior
        .pi
        .probs()
        .iter()
        .zip(mean)
        .map(|(p, m)| ((1.0 - d) * p + d * m).max(0.0))
        .collect();
    let sum: f64 = raw.iter().sum();
    AttributePrior {
        pi: Distribution::from_raw(raw.into_iter().map(|x| x / sum).collect()),
        delta: prior.delta,
        tau: prior.tau,
    }
}
