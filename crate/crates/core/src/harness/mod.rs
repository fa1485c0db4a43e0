//! Rolling forecasts, simulation studies and backtests.

pub mod backtest;
pub mod config;
pub mod forecast;
pub mod report;
pub mod study;

pub use backtest::{run_backtest, BacktestDataset, BacktestOutput};
pub use config::{EstimatorId, ModelChoice, ReturnKind, StudyConfig};
pub use forecast::{
    out_sample_origins, rolling_forecast, rolling_forecasts, semi_proxy, RollingOutput, SemiProxyEstimate,
    SeriesData, StepComponents,
};
pub use study::{run_replication, run_simulation_study, simulate_series, RepOutcome, StudyOutput};
