//! Forecast evaluation: point-wise accuracy (first-step MAE, sMAPE, valid
//! prediction time) and attractor fidelity (correlation-dimension error,
//! state-space KL divergence).

mod attractor;
mod config;
mod evaluate;
mod pointwise;

pub use attractor::{correlation_dimension, d_frac_error, d_stsp};
pub use config::MetricsConfig;
pub use evaluate::{
    aggregate, evaluate, mean_ci95, one_step_mae, CaseMetrics, Ci95, ExcludedCase, Forecaster, MetricsReport,
    ModelForecaster, OracleForecaster, PersistenceForecaster,
};
pub use pointwise::{first_step_mae, smape_at, smape_pointwise, vpt};
