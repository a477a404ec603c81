//! IPTW effect estimation, evaluation metrics and cross-validated runs.

pub mod attention;
pub mod cv;
pub mod metrics;
pub mod report;

pub use attention::{attention_summary, bucket_positions, AttentionSummary};
pub use cv::{config_hash, run_cv, run_cv_with, CvConfig, EstimatorSpec};
pub use metrics::{ate_error, ci95, iptw_ate, kfold_split, ps_mae, ps_mae_weighted, Ci, TrimMode, TrimSpec};
pub use report::{
    mean_attention, render_table, sort_reports, Aggregates, EvaluationReport, FoldMetrics, Provenance,
    REPORT_SCHEMA_VERSION,
};
