//! Experiment runner for the power spectrum estimators: TOML configs, parallel
//! sweeps over sample sizes, CSV results and SVG error plots.

pub mod config;
pub mod emit;
pub mod experiment;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mra_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
