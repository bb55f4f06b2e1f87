use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::system::VectorField;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Scratch buffers for allocation-free RK4 steps.
struct Rk4Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, f: &(impl VectorField + ?Sized), x: &mut [f64], dt: f64, step: usize) -> Result<()> {
        let half = 0.5 * dt;
        f.eval(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        f.eval(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        f.eval(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f.eval(&self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::IntegrationDiverged { step })
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("dt must be positive, got {dt}")))
    }
}

fn check_state(f: &(impl VectorField + ?Sized), x: &[f64]) -> Result<()> {
    if x.len() != f.dim() {
        return Err(Error::InvalidInput(format!(
            "state has {} components, system has {}",
            x.len(),
            f.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("state is not finite".into()));
    }
    Ok(())
}

/// One classical Runge-Kutta step.
pub fn rk4_step(f: &(impl VectorField + ?Sized), state: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    check_state(f, state)?;
    let mut x = state.to_vec();
    Rk4Work::new(f.dim()).step(f, &mut x, dt, 0)?;
    Ok(x)
}

/// Advances `x` in place by `n` steps; the error carries the absolute step index.
pub fn advance(f: &(impl VectorField + ?Sized), x: &mut [f64], dt: f64, n: usize) -> Result<()> {
    check_dt(dt)?;
    check_state(f, x)?;
    let mut work = Rk4Work::new(f.dim());
    for s in 0..n {
        work.step(f, x, dt, s)?;
    }
    Ok(())
}

/// Integrates `transient_steps` (discarded) and then records `n_steps` states
/// taken every `record_every` integration steps, starting with the post-transient state.
/// Observation noise, if any, is added after integration and never feeds back.
#[allow(clippy::too_many_arguments)]
pub fn integrate_sampled(
    f: &(impl VectorField + ?Sized),
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    record_every: usize,
    transient_steps: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<Trajectory> {
    check_dt(dt)?;
    check_state(f, x0)?;
    if n_steps == 0 || record_every == 0 {
        return Err(Error::InvalidInput("n_steps and record stride must be ≥ 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sigma must be ≥ 0, got {noise_sigma}")));
    }
    let dim = f.dim();
    let mut work = Rk4Work::new(dim);
    let mut x = x0.to_vec();
    let mut step = 0;
    for _ in 0..transient_steps {
        work.step(f, &mut x, dt, step)?;
        step += 1;
    }
    let mut states = Vec::with_capacity(n_steps * dim);
    states.extend_from_slice(&x);
    for _ in 1..n_steps {
        for _ in 0..record_every {
            work.step(f, &mut x, dt, step)?;
            step += 1;
        }
        states.extend_from_slice(&x);
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
        for v in states.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Trajectory::new(states, dim, dt * record_every as f64)
}

/// Integrates `transient_steps` (discarded) and records `n_steps` consecutive states.
pub fn integrate(
    f: &(impl VectorField + ?Sized),
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    transient_steps: usize,
    seed: u64,
    noise_sigma: f64,
) -> Result<Trajectory> {
    integrate_sampled(f, x0, dt, n_steps, 1, transient_steps, seed, noise_sigma)
}

/// Base point plus a unit-norm separation direction and the running sum of log stretches.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentState {
    pub base: Vec<f64>,
    pub perturbation: Vec<f64>,
    pub log_stretch_accum: f64,
}

/// Initial separation of the companion trajectory.
pub const MLE_DELTA0: f64 = 1e-8;

impl TangentState {
    pub fn new(base: Vec<f64>) -> Self {
        let n = base.len();
        let mut perturbation = vec![1.0 / (n as f64).sqrt(); n];
        // Alternate signs so the direction is not aligned with symmetric axes.
        for (i, p) in perturbation.iter_mut().enumerate() {
            if i % 2 == 1 {
                *p = -*p;
            }
        }
        Self {
            base,
            perturbation,
            log_stretch_accum: 0.0,
        }
    }

    /// Co-integrates base and companion for `steps`, then folds the stretch
    /// into the accumulator and renormalizes the direction.
    fn advance(&mut self, f: &(impl VectorField + ?Sized), work: &mut Rk4Work, dt: f64, steps: usize, step0: usize) -> Result<()> {
        let mut comp: Vec<f64> = self
            .base
            .iter()
            .zip(&self.perturbation)
            .map(|(b, p)| b + MLE_DELTA0 * p)
            .collect();
        for s in 0..steps {
            work.step(f, &mut self.base, dt, step0 + s)?;
            work.step(f, &mut comp, dt, step0 + s)?;
        }
        let mut norm = 0.0;
        for ((p, c), b) in self.perturbation.iter_mut().zip(&comp).zip(&self.base) {
            *p = c - b;
            norm += *p * *p;
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            // Separation collapsed below resolution; restart from the default direction.
            self.log_stretch_accum += (f64::MIN_POSITIVE / MLE_DELTA0).ln();
            self.perturbation = TangentState::new(self.base.clone()).perturbation;
            return Ok(());
        }
        self.log_stretch_accum += (norm / MLE_DELTA0).ln();
        for p in self.perturbation.iter_mut() {
            *p /= norm;
        }
        Ok(())
    }
}

/// Maximal Lyapunov exponent by two-trajectory renormalization.
pub fn estimate_mle(
    f: &(impl VectorField + ?Sized),
    x0: &[f64],
    dt: f64,
    horizon_steps: usize,
    renorm_interval: usize,
) -> Result<f64> {
    check_dt(dt)?;
    check_state(f, x0)?;
    if renorm_interval == 0 || horizon_steps < renorm_interval {
        return Err(Error::InvalidInput(format!(
            "need horizon ({horizon_steps}) ≥ renormalization interval ({renorm_interval}) ≥ 1"
        )));
    }
    let mut work = Rk4Work::new(f.dim());
    let mut state = TangentState::new(x0.to_vec());
    let blocks = horizon_steps / renorm_interval;
    for b in 0..blocks {
        state.advance(f, &mut work, dt, renorm_interval, b * renorm_interval)?;
    }
    Ok(state.log_stretch_accum / (blocks * renorm_interval) as f64 / dt)
}

/// Stride that places `points_per_tl` samples in one Lyapunov time.
pub fn lyapunov_stride(lambda_max: f64, points_per_tl: usize, dt: f64) -> Result<usize> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) || points_per_tl == 0 {
        return Err(Error::InvalidInput(format!(
            "need λ_max > 0 and points per Lyapunov time ≥ 1, got {lambda_max}, {points_per_tl}"
        )));
    }
    let lyapunov_time = 1.0 / lambda_max;
    let stride = (lyapunov_time / (points_per_tl as f64 * dt)).round();
    if stride < 1.0 {
        return Err(Error::ResolutionTooCoarse {
            stride: lyapunov_time / (points_per_tl as f64 * dt),
            dt,
            lyapunov_time,
        });
    }
    Ok(stride as usize)
}

pub fn resample_to_lyapunov_grid(traj: &Trajectory, lambda_max: f64, points_per_tl: usize) -> Result<Trajectory> {
    let stride = lyapunov_stride(lambda_max, points_per_tl, traj.dt())?;
    Ok(traj.strided(stride).with_steps_per_lyapunov_time(Some(points_per_tl)))
}
