use crate::error::{Error, Result};

/// A `T × V` state sequence stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<f64>,
    dim: usize,
    dt: f64,
    steps_per_lyapunov_time: Option<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<f64>, dim: usize, dt: f64) -> Result<Self> {
        if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "trajectory needs a non-empty multiple of dim {dim} values, got {}",
                states.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("trajectory dt must be positive, got {dt}")));
        }
        if let Some(pos) = states.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at step {}",
                pos / dim
            )));
        }
        Ok(Self {
            states,
            dim,
            dt,
            steps_per_lyapunov_time: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("ragged trajectory rows".into()));
        }
        Self::new(rows.concat(), dim, dt)
    }

    pub fn with_steps_per_lyapunov_time(mut self, steps: Option<usize>) -> Self {
        self.steps_per_lyapunov_time = steps;
        self
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    /// Always false; a trajectory holds at least one state.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_lyapunov_time(&self) -> Option<usize> {
        self.steps_per_lyapunov_time
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.states[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Column `v` as an owned series.
    pub fn component(&self, v: usize) -> Vec<f64> {
        self.rows().map(|r| r[v]).collect()
    }

    /// Steps `start..end` as a new trajectory with the same metadata.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidInput(format!(
                "window {start}..{end} outside trajectory of length {}",
                self.len()
            )));
        }
        Ok(Self {
            states: self.states[start * self.dim..end * self.dim].to_vec(),
            dim: self.dim,
            dt: self.dt,
            steps_per_lyapunov_time: self.steps_per_lyapunov_time,
        })
    }

    /// Every `stride`-th state starting from the first.
    pub fn strided(&self, stride: usize) -> Self {
        let states = self
            .rows()
            .step_by(stride.max(1))
            .flat_map(|r| r.iter().copied())
            .collect();
        Self {
            states,
            dim: self.dim,
            dt: self.dt * stride.max(1) as f64,
            steps_per_lyapunov_time: self.steps_per_lyapunov_time,
        }
    }
}

/// Per-dimension z-score statistics.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each column; constant columns get std 1.
    pub fn fit(traj: &Trajectory) -> Self {
        let (n, v) = (traj.len() as f64, traj.dim());
        let mut mean = vec![0.0; v];
        for row in traj.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; v];
        for row in traj.rows() {
            for ((s, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn forward_in_place(&self, states: &mut [f64]) {
        let v = self.dim();
        for (i, x) in states.iter_mut().enumerate() {
            *x = (*x - self.mean[i % v]) / self.std[i % v];
        }
    }

    pub fn inverse_in_place(&self, states: &mut [f64]) {
        let v = self.dim();
        for (i, x) in states.iter_mut().enumerate() {
            *x = *x * self.std[i % v] + self.mean[i % v];
        }
    }

    pub fn transform(&self, traj: &Trajectory) -> Trajectory {
        let mut out = traj.clone();
        self.forward_in_place(&mut out.states);
        out
    }

    pub fn inverse(&self, traj: &Trajectory) -> Trajectory {
        let mut out = traj.clone();
        self.inverse_in_place(&mut out.states);
        out
    }
}
