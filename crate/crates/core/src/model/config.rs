use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecaster architecture.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Token width.
    pub d: usize,
    /// Stacked trunk layers.
    #[serde(rename = "L")]
    pub layers: usize,
    /// Multi-patch prediction depth (0 disables).
    #[serde(rename = "M")]
    pub mpp_depth: usize,
    pub heads: usize,
    pub state_size: usize,
    pub rs_enabled: bool,
    /// Inner width is `expand · d`, split evenly across heads.
    pub expand: usize,
    /// Exact zero-order-hold input coefficient `(Ā − 1)/A` instead of `Δ`.
    pub exact_zoh: bool,
    /// RMS-normalize every SSM input. Without it the layer response is
    /// polynomial in the token magnitude and long rollouts blow up.
    pub pre_norm: bool,
    /// Replace the next-patch decoder by a flatten-and-project window head.
    pub encoder_oriented: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            layers: 2,
            mpp_depth: 2,
            heads: 2,
            state_size: 16,
            rs_enabled: true,
            expand: 2,
            exact_zoh: false,
            pre_norm: true,
            encoder_oriented: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("L", self.layers),
            ("heads", self.heads),
            ("state_size", self.state_size),
            ("expand", self.expand),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{k} must be ≥ 1")));
        }
        if !self.inner().is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "inner width {} is not divisible by {} heads",
                self.inner(),
                self.heads
            )));
        }
        Ok(())
    }

    pub fn inner(&self) -> usize {
        self.expand * self.d
    }

    pub fn head_dim(&self) -> usize {
        self.inner() / self.heads
    }

    /// MPP depth actually built (the window head has no patch decoder to share).
    pub fn effective_mpp_depth(&self) -> usize {
        if self.encoder_oriented {
            0
        } else {
            self.mpp_depth
        }
    }
}
