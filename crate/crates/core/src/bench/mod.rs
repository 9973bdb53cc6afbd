//! Training data generation, the experiment matrix, metrics and reports.

mod dataset;
mod experiment;
mod metrics;
mod report;
mod scenario;

pub use dataset::{generate_push_dataset, load_push_dataset, save_push_dataset, Explorer, PushDatasetConfig};
pub use experiment::{
    run_experiment, run_trial, CellSummary, ExperimentReport, ExperimentSettings, Matrix, Stat, Toolkit, Trace,
    TrialRecord,
};
pub use metrics::{compute_metrics, MetricsConfig, TrialMetrics, Zone};
pub use report::{emit_report, summary_csv, trace_svg, trials_csv, ReportFormat, SUMMARY_COLUMNS, TRIAL_COLUMNS};
pub use scenario::{build_scenario, Range, Scenario, ScenarioConfig};
