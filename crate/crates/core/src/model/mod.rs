//! The multi-task diagnosis model, its loss, metrics and local training.

mod arch;
mod loss;
mod metrics;
mod train;

pub use arch::{
    build_model, build_model_with, network_spec, predict_with, ArchConfig, DiagnosisModel,
};
pub use loss::{adaptive_loss, sensitive_coefficients, LossOutput, TaskState, F1_FLOOR};
pub use metrics::{
    mean_f1_with_positives, metric_counts, metrics, MetricCounts, TaskMetrics, THRESHOLD,
};
pub use train::{train_local, write_epoch_log, EpochLog, LocalConfig, LocalOutcome, Sample};
