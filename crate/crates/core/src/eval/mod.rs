//! Classification metrics, threshold search, timing and the variant
//! ablation harness.

mod ablation;
mod bench;
mod metrics;
mod report;

pub use ablation::{evaluate, run_ablation, run_ablation_on, AblationConfig, AblationRow, EvalReport};
pub use bench::{benchmark_speed, benchmark_speed_report, SpeedReport, MIN_BENCH_PATCHES, MIN_BENCH_REPS};
pub use metrics::{
    accuracy_at, auprc, auroc, best_threshold_accuracy, bisection_probe, Orientation, ScoredSet, ThresholdResult,
};
pub use report::{format_table, join_scores, read_scores_csv, reports_to_csv, write_reports_csv, write_reports_json};
