//! Data ingestion, rolling backtests and reporting around `thief-core`.

pub mod backtest;
pub mod config;
pub mod dataio;
pub mod report;
pub mod synth;

pub use backtest::{run, run_with, BacktestError, BacktestOutput, Engine};
pub use config::{BacktestConfig, ModelKind, RunConfig};
pub use dataio::{load_panel, ForecastRecord, PanelData};
pub use report::BacktestReport;
