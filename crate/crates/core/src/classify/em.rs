use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{Distribution, FrameSequence};

use super::prior::{e_step, update_prior_with_mean, AttributePrior};
use super::scorer::{
    forward_clip, scorer_forward, scorer_grad, ClipTargets, LinearScorer, LossBreakdown,
    TrainSample,
};
use super::init::{kmeans_scorer, ScorerInit};
use super::{EmConfig, LabeledClip};

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub prior: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub scorer: LinearScorer,
    pub prior: AttributePrior,
    pub history: Vec<EpochRecord>,
}

impl EmFit {
    /// Forward pass of the trained scorer.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<FrameSequence> {
        scorer_forward(&self.scorer, features)
    }
}

/// Pooled clip-level distribution `q` under a scorer.
pub fn clip_distribution(scorer: &LinearScorer, clip: &LabeledClip, cfg: &EmConfig) -> Distribution {
    forward_clip(scorer, clip, cfg.k_for(clip.features.len())).distribution()
}

fn validate_dataset(data: &[LabeledClip], cfg: &EmConfig) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::Config("em_fit needs a non-empty dataset".into()));
    }
    let fakes = data.iter().filter(|c| c.label.is_fake()).count();
    if fakes == 0 || fakes == data.len() {
        return Err(Error::Config(
            "em_fit needs both real and fake clips in the dataset".into(),
        ));
    }
    let d = data[0]
        .features
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::Config("clip without frames".into()))?;
    if d == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    for (i, c) in data.iter().enumerate() {
        if c.features.is_empty() || c.features.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!(
                "clip {i} has no frames or inconsistent feature dimension"
            )));
        }
    }
    cfg.validate()?;
    Ok(d)
}

/// Alternate the E-step (posteriors and attention targets for every clip)
/// with a pass of mini-batch gradient descent on the classification
/// objective, updating the attribute prior by EMA after each step.
pub fn em_fit(data: &[LabeledClip], cfg: &EmConfig) -> Result<EmFit> {
    let d = validate_dataset(data, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scorer = match cfg.init {
        ScorerInit::Random => LinearScorer::random(d, cfg.m, cfg.init_scale, cfg.seed),
        ScorerInit::Kmeans => kmeans_scorer(data, cfg, d),
    };
    let mut prior = AttributePrior::uniform(cfg.m, cfg.delta, cfg.tau)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let targets: Vec<ClipTargets> = data
            .par_iter()
            .map(|clip| {
                let f = forward_clip(&scorer, clip, cfg.k_for(clip.features.len()));
                ClipTargets {
                    posterior: e_step(&f.distribution(), &prior, clip.label),
                    attention: f.attention_targets(clip.label),
                }
            })
            .collect();

        order.shuffle(&mut rng);
        let mut acc = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainSample<'_>> = chunk
                .iter()
                .map(|&i| TrainSample {
                    clip: &data[i],
                    targets: &targets[i],
                })
                .collect();
            let eval = scorer_grad(&scorer, &batch, &prior, cfg)?;
            scorer.add_scaled(&eval.grad, -cfg.learning_rate);
            prior = update_prior_with_mean(&prior, &eval.mean_q);
            acc.bin += eval.loss.bin;
            acc.nll += eval.loss.nll;
            acc.ent += eval.loss.ent;
            acc.att += eval.loss.att;
            acc.total += eval.loss.total;
            batches += 1;
        }
        if !scorer.is_finite() {
            return Err(Error::Numeric(format!(
                "scorer diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        let b = batches as f64;
        let loss = LossBreakdown {
            bin: acc.bin / b,
            nll: acc.nll / b,
            ent: acc.ent / b,
            att: acc.att / b,
            total: acc.total / b,
        };
        log::debug!("epoch {epoch}: total {:.5}", loss.total);
        history.push(EpochRecord {
            epoch,
            loss,
            prior: prior.pi.probs().to_vec(),
        });
    }
    Ok(EmFit {
        scorer,
        prior,
        history,
    })
}
