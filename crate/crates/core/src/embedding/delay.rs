use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub m: usize,
    pub tau: usize,
    /// When false the raw series is used (m = τ = 1).
    pub enabled: bool,
    pub patch_size: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            m: 3,
            tau: 7,
            enabled: true,
            patch_size: 10,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.tau == 0 || self.patch_size == 0 {
            return Err(Error::Config(format!(
                "embedding m, tau and patch_size must be ≥ 1 (got {}, {}, {})",
                self.m, self.tau, self.patch_size
            )));
        }
        Ok(())
    }

    /// `(m, τ)` actually applied downstream.
    pub fn effective(&self) -> (usize, usize) {
        if self.enabled {
            (self.m, self.tau)
        } else {
            (1, 1)
        }
    }

    /// Width `D·V·m` of one flattened patch.
    pub fn patch_width(&self, dim: usize) -> usize {
        self.patch_size * dim * self.effective().0
    }
}

/// `V × T × m` delay coordinates, stored with `m` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayEmbedded {
    data: Vec<f64>,
    dim: usize,
    len: usize,
    m: usize,
}

impl DelayEmbedded {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_len(&self) -> usize {
        self.len
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `z` for variable `v` at step `t`, oldest coordinate first.
    pub fn at(&self, v: usize, t: usize) -> &[f64] {
        let o = (v * self.len + t) * self.m;
        &self.data[o..o + self.m]
    }
}

/// Delay coordinates of every step; indices before the series start read as zero.
pub fn delay_embed(traj: &Trajectory, cfg: &EmbeddingConfig) -> DelayEmbedded {
    let (m, tau) = cfg.effective();
    let (len, dim) = (traj.len(), traj.dim());
    if (m - 1) * tau >= len {
        log::warn!("delay span {} covers the whole series of {len} steps; output is mostly padding", (m - 1) * tau);
    }
    let x = traj.states();
    let mut data = vec![0.0; dim * len * m];
    for v in 0..dim {
        for t in 0..len {
            let o = (v * len + t) * m;
            for j in 0..m {
                let back = (m - 1 - j) * tau;
                if t >= back {
                    data[o + j] = x[(t - back) * dim + v];
                }
            }
        }
    }
    DelayEmbedded { data, dim, len, m }
}

/// `N × (D·V·m)` flattened patches; within a patch the step is slowest,
/// then the variable, then the delay coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSequence {
    patches: Vec<f64>,
    patch_size: usize,
    n_patches: usize,
    width: usize,
}

impl PatchSequence {
    pub fn from_flat(patches: Vec<f64>, patch_size: usize, width: usize) -> Result<Self> {
        if width == 0 || !patches.len().is_multiple_of(width) {
            return Err(Error::InvalidInput(format!(
                "{} values do not split into patches of width {width}",
                patches.len()
            )));
        }
        Ok(Self {
            n_patches: patches.len() / width,
            patches,
            patch_size,
            width,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.patches[i * self.width..(i + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.patches
    }

    pub fn into_data(self) -> Vec<f64> {
        self.patches
    }
}

/// Flat index of step `t` (within a patch), variable `v`, delay coordinate `j`.
#[inline]
pub fn flat_index(t: usize, v: usize, j: usize, dim: usize, m: usize) -> usize {
    (t * dim + v) * m + j
}

pub fn patchify(embedded: &DelayEmbedded, patch_size: usize) -> Result<PatchSequence> {
    if patch_size == 0 {
        return Err(Error::InvalidInput("patch size must be ≥ 1".into()));
    }
    let (len, dim, m) = (embedded.len, embedded.dim, embedded.m);
    if len < patch_size {
        return Err(Error::NotEnoughSteps {
            have: len,
            patch_size,
        });
    }
    let n = len / patch_size;
    let width = patch_size * dim * m;
    let mut patches = vec![0.0; n * width];
    for p in 0..n {
        for t in 0..patch_size {
            for v in 0..dim {
                let src = embedded.at(v, p * patch_size + t);
                let o = p * width + flat_index(t, v, 0, dim, m);
                patches[o..o + m].copy_from_slice(src);
            }
        }
    }
    Ok(PatchSequence {
        patches,
        patch_size,
        n_patches: n,
        width,
    })
}

/// Raw `D × V` states (row-major) carried by a patch: its newest delay coordinate.
pub fn patch_states(patch: &[f64], m: usize) -> Vec<f64> {
    patch.iter().skip(m - 1).step_by(m).copied().collect()
}

/// Indices into a flat patch that hold the raw states, in row-major step/variable order.
pub fn raw_state_indices(patch_size: usize, dim: usize, m: usize) -> Vec<usize> {
    (0..patch_size * dim).map(|k| k * m + m - 1).collect()
}

/// Builds the patch covering steps `start..start + D` of a raw row-major series,
/// with delay coordinates looking back into `raw` and zero before its start.
pub fn patch_from_history(raw: &[f64], dim: usize, start: usize, cfg: &EmbeddingConfig) -> Vec<f64> {
    let (m, tau) = cfg.effective();
    let d = cfg.patch_size;
    let mut out = vec![0.0; d * dim * m];
    for t in 0..d {
        let step = start + t;
        for v in 0..dim {
            for j in 0..m {
                let back = (m - 1 - j) * tau;
                if step >= back {
                    out[flat_index(t, v, j, dim, m)] = raw[(step - back) * dim + v];
                }
            }
        }
    }
    out
}
