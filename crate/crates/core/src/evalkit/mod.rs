//! Post-processing and evaluation: soft-NMS, the localization-phase loss
//! schedule, detection metrics, and classification summaries.

mod metrics;
mod nms;
mod schedule;

pub use metrics::{
    average_precision, average_recall, binary_auc, cluster_purity, evaluate, Detection,
    EvalConfig, EvalReport, GroundTruth,
};
pub use nms::{soft_nms, SoftNmsConfig};
pub use schedule::{combined_loss, gamma_schedule};
