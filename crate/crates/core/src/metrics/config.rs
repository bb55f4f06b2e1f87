use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// sMAPE threshold for the valid prediction time.
    pub epsilon: f64,
    /// Overrides the trajectories' own steps per Lyapunov time.
    pub steps_per_tl: Option<usize>,
    /// Horizons (in Lyapunov times) at which sMAPE is reported.
    pub smape_horizons: Vec<usize>,
    /// Number of log-spaced correlation-sum radii.
    pub gp_radii: usize,
    /// Pair-distance quantiles bounding the radii.
    pub gp_quantiles: (f64, f64),
    pub gp_max_points: usize,
    /// Isotropic component std of the attractor mixtures (standardized units).
    pub gmm_scale: f64,
    pub mc_samples: usize,
    /// Per-cloud cap on mixture components.
    pub subsample_cap: usize,
    /// Lower bound applied to mixture log-densities.
    pub log_density_floor: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            epsilon: 30.0,
            steps_per_tl: None,
            smape_horizons: vec![1, 4, 10],
            gp_radii: 12,
            gp_quantiles: (0.001, 0.05),
            gp_max_points: 2000,
            gmm_scale: 1.0,
            mc_samples: 5000,
            subsample_cap: 500,
            log_density_floor: -1e4,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 200.0) {
            return Err(Error::Config(format!("metrics.epsilon must lie in (0, 200), got {}", self.epsilon)));
        }
        if self.mc_samples < 100 {
            return Err(Error::Config(format!("metrics.mc_samples must be ≥ 100, got {}", self.mc_samples)));
        }
        let (lo, hi) = self.gp_quantiles;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("metrics.gp_quantiles must satisfy 0 < lo < hi ≤ 1, got ({lo}, {hi})")));
        }
        if self.gp_radii < 2 || self.gp_max_points < 100 || self.subsample_cap == 0 {
            return Err(Error::Config(
                "metrics.gp_radii must be ≥ 2, gp_max_points ≥ 100 and subsample_cap ≥ 1".into(),
            ));
        }
        if !(self.gmm_scale > 0.0) {
            return Err(Error::Config("metrics.gmm_scale must be positive".into()));
        }
        if self.steps_per_tl == Some(0) {
            return Err(Error::Config("metrics.steps_per_tl must be ≥ 1".into()));
        }
        Ok(())
    }
}
