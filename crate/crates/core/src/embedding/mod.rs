//! Delay embedding, patch tokenization and (m, τ) selection.

mod delay;
mod select;

pub use delay::{
    delay_embed, flat_index, patch_from_history, patch_states, patchify, raw_state_indices, DelayEmbedded,
    EmbeddingConfig, PatchSequence,
};
pub use select::{ami_curve, fnn_curve, select_m, select_tau, Selection};

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub tau_max: usize,
    pub n_bins: usize,
    pub m_max: usize,
    /// In standard deviations of the series.
    pub radius: f64,
    pub saturation_tol: f64,
    /// Cap on the number of samples used by the quadratic neighbor count.
    pub max_points: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            tau_max: 30,
            n_bins: 16,
            m_max: 8,
            radius: 0.5,
            saturation_tol: 0.05,
            max_points: 3000,
        }
    }
}

/// Curves and choices for one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableSelection {
    pub ami: Vec<f64>,
    pub fnn: Vec<f64>,
    pub tau: Selection,
    pub m: Selection,
}

pub fn select_for_series(series: &[f64], cfg: &SelectionConfig) -> Result<VariableSelection> {
    let ami = ami_curve(series, cfg.tau_max.min(series.len().saturating_sub(1)).max(1), cfg.n_bins)?;
    let tau = select_tau(&ami);
    let s = &series[..series.len().min(cfg.max_points.max(2))];
    let fnn = fnn_curve(s, tau.value, cfg.m_max, cfg.radius)?;
    let m = select_m(&fnn, cfg.saturation_tol);
    Ok(VariableSelection { ami, fnn, tau, m })
}

/// Runs the selectors on every variable; variable 0 decides, the others are reported.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSelection {
    pub per_variable: Vec<VariableSelection>,
    pub m: usize,
    pub tau: usize,
}

impl EmbeddingSelection {
    /// Variables whose own choice differs from the adopted one.
    pub fn disagreeing(&self) -> Vec<usize> {
        self.per_variable
            .iter()
            .enumerate()
            .filter(|(_, s)| s.m.value != self.m || s.tau.value != self.tau)
            .map(|(v, _)| v)
            .collect()
    }
}

pub fn select_embedding(traj: &Trajectory, cfg: &SelectionConfig) -> Result<EmbeddingSelection> {
    let per_variable = (0..traj.dim())
        .map(|v| select_for_series(&traj.component(v), cfg))
        .collect::<Result<Vec<_>>>()?;
    let (m, tau) = (per_variable[0].m.value, per_variable[0].tau.value);
    let sel = EmbeddingSelection { per_variable, m, tau };
    let off = sel.disagreeing();
    if !off.is_empty() {
        log::warn!("variables {off:?} prefer a different (m, tau) than variable 0's ({m}, {tau})");
    }
    Ok(sel)
}
