//! Command-line experiments over the `colht` library: configuration,
//! execution and reporting.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, read_config, ConfigError, ExperimentConfig, Format, Mode, Parsed};
pub use report::{emit_report, emit_to_dir, read_jsonl, FailureKind, Report, ReportBody, Row};
pub use run::run_experiment;
