//! Configuration, execution, persistence and reporting of experiments.

pub mod config;
pub mod records;
pub mod report;
pub mod runner;

pub use config::{parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use records::{read_results, read_results_file, write_results, ResultRecord};
pub use report::{summarize, CriterionStatus, ReportSummary, Verdict};
pub use runner::{run_experiment, ExitStatus, RunError, RunOutcome};
