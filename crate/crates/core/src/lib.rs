//! Weakly supervised temporal forgery localization.
//!
//! The crate covers everything downstream of the feature encoders:
//!
//! - [`classify`]: top-k multiple-instance pooling, binary losses, and EM
//!   decomposition of binary labels into latent forgery attributes, driven
//!   by a small linear scorer with analytic gradients.
//! - [`tcr`]: training-free KL projection of frame attribute rows onto the
//!   attention-weighted clip-level target.
//! - [`proposals`]: multi-threshold segment extraction with OIC scoring.
//! - [`gpr`]: Ricker-wavelet fusion of proposals with graph-diffused
//!   confidences, producing pseudo labels.
//! - [`evalkit`]: soft-NMS, the localization-phase loss schedule, and
//!   mAP / mAR evaluation.
//! - [`synth`]: deterministic synthetic clips for desk-scale experiments.
//! - [`io`] and [`pipeline`]: JSONL interchange and the staged CLI driver.

pub mod classify;
pub mod error;
pub mod evalkit;
pub mod gpr;
pub mod io;
pub mod pipeline;
pub mod primitives;
pub mod proposals;
pub mod synth;
pub mod tcr;

pub use error::{Error, Result};
pub use primitives::{
    clip_to_simplex, diou_1d, iou_1d, ClipLabel, Distribution, FrameSequence, Interval,
};
