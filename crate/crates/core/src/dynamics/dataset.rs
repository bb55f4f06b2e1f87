use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::integrate::integrate_sampled;
use super::system::{OdeSystem, VectorField};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// A forecasting problem: observed context and the continuation to predict.
#[derive(Clone, Debug, PartialEq)]
pub struct TestCase {
    pub context: Trajectory,
    pub target: Trajectory,
}

/// Window geometry for [`build_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    pub points_per_tl: usize,
    /// Teacher-forcing window length; defaults to one Lyapunov time.
    pub tf_window_len: Option<usize>,
    /// Trailing steps held out for validation (0 disables).
    pub val_steps: usize,
    pub context_tl: usize,
    pub target_tl: usize,
}

impl SplitConfig {
    pub fn new(points_per_tl: usize) -> Self {
        Self {
            points_per_tl,
            tf_window_len: None,
            val_steps: 0,
            context_tl: 1,
            target_tl: 10,
        }
    }

    pub fn tf_len(&self) -> usize {
        self.tf_window_len.unwrap_or(self.points_per_tl)
    }

    pub fn sf_len(&self) -> usize {
        2 * self.points_per_tl
    }

    pub fn context_len(&self) -> usize {
        self.context_tl * self.points_per_tl
    }

    pub fn target_len(&self) -> usize {
        self.target_tl * self.points_per_tl
    }
}

/// Where test cases come from.
#[derive(Clone, Debug)]
pub enum TestSource {
    /// Fresh trajectories from random initial conditions.
    Simulated(SimulatedTests),
    /// Sliding windows over a separate recorded trajectory.
    Windows { traj: Trajectory, n_cases: usize },
    /// Already-built cases.
    Provided(Vec<TestCase>),
}

#[derive(Clone, Debug)]
pub struct SimulatedTests {
    pub system: OdeSystem,
    pub dt: f64,
    /// Integration steps between recorded samples.
    pub stride: usize,
    pub n_ics: usize,
    pub transient_steps: usize,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub tf_train: Vec<Trajectory>,
    pub sf_train: Vec<Trajectory>,
    pub tf_val: Vec<Trajectory>,
    pub sf_val: Vec<Trajectory>,
    pub test_cases: Vec<TestCase>,
    pub window_len_tf: usize,
    pub window_len_sf: usize,
}

fn sliding(traj: &Trajectory, len: usize) -> Result<Vec<Trajectory>> {
    if traj.len() < len {
        return Ok(Vec::new());
    }
    (0..=traj.len() - len).map(|s| traj.window(s, s + len)).collect()
}

/// Cuts a recorded trajectory into shuffled training windows, an optional
/// held-out validation tail, and attaches test cases.
pub fn build_dataset(traj: &Trajectory, cfg: &SplitConfig, tests: TestSource, seed: u64) -> Result<DatasetSplit> {
    let (tf_len, sf_len) = (cfg.tf_len(), cfg.sf_len());
    if cfg.points_per_tl == 0 || tf_len == 0 {
        return Err(Error::InvalidInput("window lengths must be ≥ 1".into()));
    }
    let required = tf_len.max(sf_len) + cfg.val_steps;
    if traj.len() < required {
        return Err(Error::DatasetTooShort {
            required,
            actual: traj.len(),
        });
    }
    let train_end = traj.len() - cfg.val_steps;
    let train = traj.window(0, train_end)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Drawn first so the test set does not depend on the window geometry.
    let test_seed: u64 = rng.random();
    let mut tf_train = sliding(&train, tf_len)?;
    let mut sf_train = sliding(&train, sf_len)?;
    tf_train.shuffle(&mut rng);
    sf_train.shuffle(&mut rng);
    let (tf_val, sf_val) = if cfg.val_steps > 0 {
        let val = traj.window(train_end, traj.len())?;
        (sliding(&val, tf_len)?, sliding(&val, sf_len)?)
    } else {
        (Vec::new(), Vec::new())
    };
    let test_cases = match tests {
        TestSource::Simulated(sim) => {
            simulate_test_cases(&sim, cfg, test_seed)?
        }
        TestSource::Windows { traj, n_cases } => sliding_test_cases(&traj, cfg, n_cases)?,
        TestSource::Provided(cases) => cases,
    };
    Ok(DatasetSplit {
        tf_train,
        sf_train,
        tf_val,
        sf_val,
        test_cases,
        window_len_tf: tf_len,
        window_len_sf: sf_len,
    })
}

/// Uniform draw from the system's initial-condition box.
pub fn random_initial_condition(system: &OdeSystem, rng: &mut impl Rng) -> Vec<f64> {
    let (centre, half) = system.initial_condition_box();
    centre
        .iter()
        .zip(&half)
        .map(|(c, h)| c + h * rng.random_range(-1.0..=1.0))
        .collect()
}

/// One trajectory per initial condition, each split into context and target.
/// Case `k` depends only on `(seed, k)`, so parallel and serial runs agree.
pub fn simulate_test_cases(sim: &SimulatedTests, cfg: &SplitConfig, seed: u64) -> Result<Vec<TestCase>> {
    let (ctx, tgt) = (cfg.context_len(), cfg.target_len());
    (0..sim.n_ics)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let x0 = random_initial_condition(&sim.system, &mut rng);
            debug_assert_eq!(x0.len(), sim.system.dim());
            let traj = integrate_sampled(
                &sim.system,
                &x0,
                sim.dt,
                ctx + tgt,
                sim.stride,
                sim.transient_steps,
                rng.random(),
                sim.noise_sigma,
            )?
            .with_steps_per_lyapunov_time(Some(cfg.points_per_tl));
            Ok(TestCase {
                context: traj.window(0, ctx)?,
                target: traj.window(ctx, ctx + tgt)?,
            })
        })
        .collect()
}

/// `n_cases` evenly spaced (possibly overlapping) windows over `traj`.
pub fn sliding_test_cases(traj: &Trajectory, cfg: &SplitConfig, n_cases: usize) -> Result<Vec<TestCase>> {
    let (ctx, tgt) = (cfg.context_len(), cfg.target_len());
    let len = ctx + tgt;
    if traj.len() < len {
        return Err(Error::DatasetTooShort {
            required: len,
            actual: traj.len(),
        });
    }
    let span = traj.len() - len;
    let n = n_cases.min(span + 1);
    (0..n)
        .map(|k| {
            let start = if n > 1 { k * span / (n - 1) } else { 0 };
            Ok(TestCase {
                context: traj.window(start, start + ctx)?,
                target: traj.window(start + ctx, start + len)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Trajectory {
        Trajectory::new((0..n).map(|i| i as f64).collect(), 1, 1.0).unwrap()
    }

    #[test]
    fn window_counts() {
        let split = build_dataset(&ramp(60), &SplitConfig::new(30), TestSource::Provided(vec![]), 3).unwrap();
        assert_eq!(split.tf_train.len(), 31);
        assert_eq!(split.sf_train.len(), 1);
        assert!(split.tf_train.iter().all(|w| w.len() == 30));
        assert_eq!(split.sf_train[0].len(), 60);
    }

    #[test]
    fn windows_are_verbatim_and_deterministic() {
        let t = ramp(100);
        let cfg = SplitConfig {
            val_steps: 20,
            ..SplitConfig::new(10)
        };
        let a = build_dataset(&t, &cfg, TestSource::Provided(vec![]), 9).unwrap();
        let b = build_dataset(&t, &cfg, TestSource::Provided(vec![]), 9).unwrap();
        assert_eq!(a, b);
        for w in a.tf_train.iter().chain(&a.sf_train) {
            let s = w.states()[0] as usize;
            assert!(s + w.len() <= 80);
            assert_eq!(w, &t.window(s, s + w.len()).unwrap());
        }
        assert_eq!(a.tf_val.len(), 11);
        assert!(a.tf_val.iter().all(|w| w.states()[0] >= 80.0));
        let c = build_dataset(&t, &cfg, TestSource::Provided(vec![]), 10).unwrap();
        assert_ne!(a.tf_train, c.tf_train);
    }

    #[test]
    fn too_short_reports_requirement() {
        let err = build_dataset(&ramp(1), &SplitConfig::new(30), TestSource::Provided(vec![]), 0).unwrap_err();
        assert!(matches!(err, Error::DatasetTooShort { required: 60, actual: 1 }));
    }

    #[test]
    fn simulated_cases_have_protocol_shape() {
        let sim = SimulatedTests {
            system: OdeSystem::lorenz63(),
            dt: 0.001,
            stride: 37,
            n_ics: 3,
            transient_steps: 1000,
            noise_sigma: 0.0,
        };
        let cases = simulate_test_cases(&sim, &SplitConfig::new(30), 5).unwrap();
        assert_eq!(cases.len(), 3);
        for c in &cases {
            assert_eq!((c.context.len(), c.context.dim()), (30, 3));
            assert_eq!(c.target.len(), 300);
        }
        assert_ne!(cases[0].context, cases[1].context);
        assert_eq!(cases, simulate_test_cases(&sim, &SplitConfig::new(30), 5).unwrap());
    }

    #[test]
    fn sliding_cases_cover_range() {
        let cases = sliding_test_cases(&ramp(400), &SplitConfig::new(30), 4).unwrap();
        assert_eq!(cases.len(), 4);
        assert_eq!(cases[0].context.states()[0], 0.0);
        assert_eq!(cases[3].target.states()[299], 399.0);
    }
}
