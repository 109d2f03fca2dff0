//! Metrics, experiment configuration, transfer grids and log reports.

mod config;
mod gradcheck;
mod metrics;
mod report;
mod runner;
mod transfer;

pub use config::{prepare_data, run_noise, DatasetSpec, ExperimentConfig, TaskSpec, TransferSpec};
pub use gradcheck::{all_cases, gradcheck_suite, CaseResult, GradcheckReport};
pub use metrics::{
    accuracy, correction_metrics, macro_f1, mean_kl, CorrectionMetrics, MetricsReport, SeedMetrics, Stat,
};
pub use report::{aggregate, report_csv, report_text, write_report, RunGroup, REPORT_METRICS};
pub use runner::{median, run_experiment, run_meta_test, seed_metrics, ExperimentSummary};
pub use transfer::{transfer_grid, CellOutcome, TransferCell, TransferGrid};
