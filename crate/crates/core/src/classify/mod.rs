//! Classification phase: multiple-instance pooling, binary losses, and the
//! EM decomposition of binary clip labels into latent forgery attributes.

mod aggregate;
mod em;
mod init;
mod loss;
mod prior;
mod scorer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::ClipLabel;

pub use aggregate::{clip_forgery_prob, k_from_ratio, topk_aggregate, topk_direct, topk_indices};
pub use init::ScorerInit;
pub use em::{clip_distribution, em_fit, EmFit, EpochRecord};
pub use loss::{bce_batch, bce_loss, entropy_reg, nll_loss, total_cls_loss, BCE_EPS};
pub use prior::{
    batch_mean, e_step, update_prior, AttributePrior, Posterior, DEFAULT_DELTA, DEFAULT_TAU,
    EM_EPS,
};
pub use scorer::{
    batch_loss, scorer_forward, scorer_grad, ClipTargets, GradientEval, LinearScorer,
    LossBreakdown, TrainSample,
};

/// Features and binary label of one training clip.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    /// `T x d` feature matrix.
    pub features: Vec<Vec<f64>>,
    pub label: ClipLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Number of latent forgery attributes.
    pub m: usize,
    /// `k = max(1, floor(k_ratio * T))`.
    pub k_ratio: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Weight of the attention self-distillation term; zero disables it.
    pub attention_weight: f64,
    pub tau: f64,
    pub delta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
    pub init: ScorerInit,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            m: 3,
            k_ratio: 0.125,
            lambda1: 0.8,
            lambda2: 0.5,
            attention_weight: 1.0,
            tau: DEFAULT_TAU,
            delta: DEFAULT_DELTA,
            epochs: 20,
            batch_size: 128,
            learning_rate: 1.0,
            init_scale: 0.1,
            init: ScorerInit::Kmeans,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn k_for(&self, t: usize) -> usize {
        k_from_ratio(self.k_ratio, t)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if !(self.k_ratio > 0.0 && self.k_ratio <= 1.0) {
            return bad(format!("k_ratio must lie in (0, 1], got {}", self.k_ratio));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.attention_weight < 0.0 {
            return bad("loss weights must be nonnegative".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.tau <= 0.0 {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        Ok(())
    }
}
