use crate::error::{ensure, Result};
use crate::primitives::{ClipLabel, Distribution};

use super::prior::{batch_mean, AttributePrior, Posterior, EM_EPS};
use super::EmConfig;

/// Probability clamp applied before logs in the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Binary cross-entropy of a single probability against the clip label.
pub(crate) fn bce_term(p: f64, y: ClipLabel) -> f64 {
    let p = clamp_prob(p);
    if y.is_fake() {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Per-sample binary loss over both clip-level predictions.
pub fn bce_loss(y_hat: f64, y_tilde: f64, y: ClipLabel) -> f64 {
    bce_term(y_hat, y) + bce_term(y_tilde, y)
}

/// Batch mean of [`bce_loss`].
pub fn bce_batch(y_hat: &[f64], y_tilde: &[f64], labels: &[ClipLabel]) -> Result<f64> {
    ensure!(
        y_hat.len() == labels.len() && y_tilde.len() == labels.len() && !labels.is_empty(),
        "bce batch length mismatch"
    );
    let sum: f64 = y_hat
        .iter()
        .zip(y_tilde)
        .zip(labels)
        .map(|((&a, &b), &y)| bce_loss(a, b, y))
        .sum();
    Ok(sum / labels.len() as f64)
}

/// Negative log-likelihood of the clip distributions under fixed posteriors.
pub fn nll_loss(posteriors: &[Posterior], qs: &[Distribution]) -> Result<f64> {
    ensure!(
        posteriors.len() == qs.len() && !qs.is_empty(),
        "nll_loss needs equal non-empty batches ({} posteriors, {} distributions)",
        posteriors.len(),
        qs.len()
    );
    let sum: f64 = posteriors
        .iter()
        .zip(qs)
        .map(|(p, q)| {
            p.probs
                .probs()
                .iter()
                .zip(q.probs())
                .map(|(&w, &qc)| -w * qc.max(EM_EPS).ln())
                .sum::<f64>()
        })
        .sum();
    Ok(sum / qs.len() as f64)
}

/// Prior-weighted cross-entropy of the batch-mean forged distribution;
/// discourages collapse onto a few attributes. Class 0 is excluded.
pub fn entropy_reg(prior: &AttributePrior, qs: &[Distribution]) -> Result<f64> {
    ensure!(!qs.is_empty(), "entropy_reg needs a non-empty batch");
    let mean = batch_mean(qs);
    Ok(entropy_from_mean(prior, &mean))
}

pub(crate) fn entropy_from_mean(prior: &AttributePrior, mean: &[f64]) -> f64 {
    (1..mean.len())
        .map(|c| -prior.pi[c] * mean[c].max(EM_EPS).ln())
        .sum()
}

pub fn total_cls_loss(bin: f64, nll: f64, ent: f64, cfg: &EmConfig) -> f64 {
    bin + cfg.lambda1 * nll + cfg.lambda2 * ent
}
