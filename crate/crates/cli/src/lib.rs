//! Experiment harness for fair and diverse ranking: benchmark tables,
//! parameter sweeps, CSV output and SVG plots.

pub mod config;
pub mod harness;
pub mod plot;
pub mod stats;
pub mod sweep;

pub use config::ExperimentConfig;
pub use harness::{compare_strategies, run_table, sample_seed, MethodRow, StrategyReport, TableReport};
pub use plot::{plot_csv, PlotKind};
pub use sweep::{run_sweep, Axis, SweepMetric, SweepReport, SweepRow};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tsfd_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot plot: {0}")]
    Plot(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
