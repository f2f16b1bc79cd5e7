//! Experiment runner for the `audit` binary: config parsing, grid execution
//! and result files.

pub mod config;
pub mod output;

pub use config::{parse_config, parse_config_str, ExperimentPlan, OutputFormat, PlanEntry};
pub use output::{emit_figure_data, run_plan, FigureRow, PlanResults, ResultRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Audit(#[from] ldp_audit::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
