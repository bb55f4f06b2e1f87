use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DEFAULT_ENVELOPE;

/// Rational-quadratic bandwidths of the MMD kernel mixture.
pub const DEFAULT_SIGMAS: [f64; 4] = [0.2, 0.5, 0.9, 1.3];

/// Optimisation settings for both stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the averaged multi-patch losses.
    pub lambda_p: f64,
    /// Weight of the ground-truth MMD term relative to the history term.
    pub lambda_c: f64,
    /// Overall regularisation strength.
    pub lambda_r: f64,
    pub tf_lr: f64,
    pub sf_lr: f64,
    pub batch_size: usize,
    pub tf_epochs: usize,
    pub sf_epochs: usize,
    /// Epochs without validation improvement before stopping (0 disables).
    pub patience: usize,
    /// Optimizer steps per stage; stops mid-epoch when reached.
    pub tf_max_steps: Option<usize>,
    pub sf_max_steps: Option<usize>,
    /// Patches rolled out during student forcing; defaults to one Lyapunov time.
    pub sf_patches: Option<usize>,
    pub kernel_sigmas: Vec<f64>,
    /// Per-set cap on pooled states entering the MMD (seeded subsample).
    pub mmd_max_points: usize,
    pub max_grad_norm: Option<f64>,
    /// Squared instead of plain norms in the multi-patch loss.
    pub mpp_squared: bool,
    pub sf_enabled: bool,
    pub mmd_enabled: bool,
    /// Rollout bound in standard deviations.
    pub envelope: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_p: 0.1,
            lambda_c: 1000.0,
            lambda_r: 1.0,
            tf_lr: 1e-3,
            sf_lr: 1e-4,
            batch_size: 32,
            tf_epochs: 50,
            sf_epochs: 20,
            patience: 5,
            tf_max_steps: None,
            sf_max_steps: None,
            sf_patches: None,
            kernel_sigmas: DEFAULT_SIGMAS.to_vec(),
            mmd_max_points: 256,
            max_grad_norm: None,
            mpp_squared: false,
            sf_enabled: true,
            mmd_enabled: true,
            envelope: DEFAULT_ENVELOPE,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_p", self.lambda_p),
            ("lambda_c", self.lambda_c),
            ("lambda_r", self.lambda_r),
        ];
        for (k, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("training.{k} must be a finite value ≥ 0, got {w}")));
            }
        }
        for (k, lr) in [("tf_lr", self.tf_lr), ("sf_lr", self.sf_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("training.{k} must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("training.batch_size must be ≥ 1".into()));
        }
        if self.kernel_sigmas.is_empty() || self.kernel_sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("training.kernel_sigmas must be a non-empty list of positive values".into()));
        }
        if self.mmd_max_points == 0 {
            return Err(Error::Config("training.mmd_max_points must be ≥ 1".into()));
        }
        if self.sf_patches == Some(0) {
            return Err(Error::Config("training.sf_patches must be ≥ 1".into()));
        }
        if let Some(c) = self.max_grad_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("training.max_grad_norm must be positive, got {c}")));
            }
        }
        if !(self.envelope > 0.0) {
            return Err(Error::Config("training.envelope must be positive".into()));
        }
        Ok(())
    }
}
