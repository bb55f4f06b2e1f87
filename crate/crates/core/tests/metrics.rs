mod common;

use std::collections::BTreeMap;

use chaoscast::dynamics::{simulate_test_cases, OdeSystem, SimulatedTests, SplitConfig, Standardizer, TestCase, Trajectory};
use chaoscast::error::{Error, Result};
use chaoscast::metrics::{
    aggregate, correlation_dimension, d_frac_error, d_stsp, evaluate, mean_ci95, one_step_mae, smape_at, smape_pointwise, vpt,
    CaseMetrics, Forecaster, MetricsConfig, MetricsReport, OracleForecaster, PersistenceForecaster,
};
use common::SplitMix;
use proptest::prelude::*;

fn traj(rows: &[Vec<f64>]) -> Trajectory {
    Trajectory::from_rows(rows, 0.01).unwrap().with_steps_per_lyapunov_time(Some(30))
}

fn random_rows(rng: &mut SplitMix, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect()
}

fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

#[test]
fn smape_hand_cases() {
    assert_eq!(smape_pointwise(&[3.0, -1.0], &[3.0, -1.0]), 0.0);
    assert_eq!(smape_pointwise(&[3.0, -1.0], &[-3.0, 1.0]), 200.0);
    assert!((smape_pointwise(&[1.0, 0.0], &[0.0, 1.0]) - 141.421_356_237_309_5).abs() < 1e-10);
    assert_eq!(smape_pointwise(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smape_is_bounded_and_scale_free(x in prop::collection::vec(-10.0f64..10.0, 3), y in prop::collection::vec(-10.0f64..10.0, 3), k in 0.01f64..100.0) {
        let s = smape_pointwise(&x, &y);
        prop_assert!((0.0..=200.0).contains(&s));
        let xs: Vec<f64> = x.iter().map(|v| v * k).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        prop_assert!((smape_pointwise(&xs, &ys) - s).abs() < 1e-9);
    }

    #[test]
    fn smape_antipodal_is_exactly_200(x in prop::collection::vec(-10.0f64..10.0, 1..6)) {
        prop_assume!(x.iter().any(|v| *v != 0.0));
        let anti: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(smape_pointwise(&x, &anti), 200.0);
    }

    #[test]
    fn vpt_grows_with_the_threshold(seed in 0u64..5000, noise in 0.01f64..1.0) {
        let mut rng = SplitMix(seed);
        let truth = random_rows(&mut rng, 120, 3);
        let pred: Vec<Vec<f64>> = truth
            .iter()
            .enumerate()
            .map(|(t, r)| r.iter().map(|v| v + noise * t as f64 / 30.0 * rng.normal()).collect())
            .collect();
        let (a, b) = (traj(&truth), traj(&pred));
        let mut prev = 0.0;
        for eps in [10.0, 30.0, 50.0, 120.0] {
            let cfg = MetricsConfig { epsilon: eps, ..Default::default() };
            let v = vpt(&a, &b, &cfg).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }
}

#[test]
fn smape_at_averages_the_horizon() {
    let mut rng = SplitMix(1);
    let truth = random_rows(&mut rng, 60, 3);
    let mut pred = truth.clone();
    for r in &mut pred[30..] {
        r.iter_mut().for_each(|v| *v = -*v);
    }
    let cfg = MetricsConfig::default();
    let (a, b) = (traj(&truth), traj(&pred));
    assert_eq!(smape_at(&a, &a, 2, &cfg).unwrap(), 0.0);
    assert!((smape_at(&a, &b, 2, &cfg).unwrap() - 100.0).abs() < 1e-12);
    assert!(matches!(smape_at(&a, &b, 3, &cfg), Err(Error::HorizonTooShort { .. })));

    let noisy: Vec<Vec<f64>> = truth.iter().map(|r| r.iter().map(|v| v + 0.3 * rng.normal()).collect()).collect();
    let want: f64 = truth[..30].iter().zip(&noisy).map(|(x, y)| {
        let d = common::dist(x, y);
        200.0 * d / (common::norm(x) + common::norm(y))
    }).sum::<f64>() / 30.0;
    assert!((smape_at(&a, &traj(&noisy), 1, &cfg).unwrap() - want).abs() < 1e-12);
}

#[test]
fn vpt_constructed_sequences() {
    let mut rng = SplitMix(2);
    let truth = random_rows(&mut rng, 300, 3);
    let cfg = MetricsConfig::default();
    let a = traj(&truth);
    assert_eq!(vpt(&a, &a, &cfg).unwrap(), 10.0);
    let mut pred = truth.clone();
    for r in &mut pred[45..] {
        r.iter_mut().for_each(|v| *v = -*v);
    }
    assert_eq!(vpt(&a, &traj(&pred), &cfg).unwrap(), 1.5);
}

fn line_points(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix(seed);
    (0..n).flat_map(|_| {
        let t = rng.uniform();
        [t, 2.0 * t, -t]
    }).collect()
}

fn square_points(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix(seed);
    (0..n).flat_map(|_| [rng.uniform(), rng.uniform()]).collect()
}

#[test]
fn correlation_dimension_of_simple_sets() {
    let cfg = MetricsConfig::default();
    let line = correlation_dimension(&line_points(2000, 3), 3, &cfg, 0).unwrap();
    assert!((line - 1.0).abs() < 0.1, "line {line}");
    let square = correlation_dimension(&square_points(2000, 4), 2, &cfg, 0).unwrap();
    assert!((square - 2.0).abs() < 0.15, "square {square}");
}

#[test]
fn correlation_dimension_of_lorenz() {
    let pts = common::lorenz_attractor_points(100_000, 0.01, 1);
    let d = correlation_dimension(&flat(&pts), 3, &MetricsConfig::default(), 0).unwrap();
    assert!((d - 2.05).abs() < 0.15, "lorenz {d}");
}

#[test]
fn correlation_dimension_ignores_rotation_and_scale() {
    let cfg = MetricsConfig::default();
    let base = square_points(1500, 5);
    let d0 = correlation_dimension(&base, 2, &cfg, 1).unwrap();
    for (angle, k) in [(0.3f64, 1.0), (1.1, 7.5), (2.5, 0.01)] {
        let (c, s) = (angle.cos(), angle.sin());
        let moved: Vec<f64> = base
            .chunks(2)
            .flat_map(|p| [k * (c * p[0] - s * p[1]) + 3.0, k * (s * p[0] + c * p[1]) - 1.0])
            .collect();
        let d = correlation_dimension(&moved, 2, &cfg, 1).unwrap();
        assert!((d - d0).abs() < 1e-6, "angle {angle}, scale {k}: {d} vs {d0}");
    }
}

#[test]
fn degenerate_clouds_are_rejected() {
    let cfg = MetricsConfig::default();
    let still = vec![1.0; 600];
    assert!(matches!(correlation_dimension(&still, 3, &cfg, 0), Err(Error::DegenerateAttractor(_))));
    assert!(matches!(correlation_dimension(&square_points(50, 1), 2, &cfg, 0), Err(Error::DegenerateAttractor(_))));
}

#[test]
fn d_frac_against_loop_oracle() {
    let cfg = MetricsConfig::default();
    let sq = |s| Trajectory::new(square_points(600, s), 2, 0.1).unwrap();
    let ln = |s| Trajectory::new(line_points(600, s).chunks(3).flat_map(|p| [p[0], p[1]]).collect(), 2, 0.1).unwrap();
    let truth = vec![sq(1), sq(2), ln(3)];
    let pred = vec![sq(1), ln(4), sq(5)];
    assert_eq!(d_frac_error(&truth[..1], &pred[..1], &cfg, 3).unwrap(), 0.0);
    let dims = |t: &Trajectory| correlation_dimension(t.states(), 2, &cfg, 3).unwrap();
    let want = (truth.iter().zip(&pred).map(|(a, b)| (dims(a) - dims(b)).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((d_frac_error(&truth, &pred, &cfg, 3).unwrap() - want).abs() < 1e-12);
}

/// `KL(p ‖ q)` between 1-D unit-variance mixtures by trapezoidal quadrature.
fn kl_quadrature(p: &[f64], q: &[f64]) -> f64 {
    let dens = |c: &[f64], x: f64| c.iter().map(|m| (-(x - m).powi(2) / 2.0).exp()).sum::<f64>() / (c.len() as f64 * (2.0 * std::f64::consts::PI).sqrt());
    let lo = p.iter().chain(q).copied().fold(f64::INFINITY, f64::min) - 12.0;
    let hi = p.iter().chain(q).copied().fold(f64::NEG_INFINITY, f64::max) + 12.0;
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let x = lo + i as f64 * h;
            let (a, b) = (dens(p, x), dens(q, x));
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            if a > 0.0 { w * a * (a / b).ln() } else { 0.0 }
        })
        .sum::<f64>()
        * h
}

#[test]
fn d_stsp_identical_and_shifted_clouds() {
    let cfg = MetricsConfig::default();
    let floor = 3.0 / (cfg.mc_samples as f64).sqrt();
    let mut rng = SplitMix(6);
    let cloud = flat(&random_rows(&mut rng, 300, 3));
    let same = d_stsp(&cloud, &cloud, 3, &cfg, 1).unwrap();
    assert!(same.abs() < floor, "{same}");
    let shifted: Vec<f64> = cloud.iter().map(|v| v + 10.0 * cfg.gmm_scale).collect();
    let far = d_stsp(&cloud, &shifted, 3, &cfg, 1).unwrap();
    assert!(far > same + 10.0 * floor, "{far}");
    assert_eq!(far, d_stsp(&cloud, &shifted, 3, &cfg, 1).unwrap());
}

#[test]
fn d_stsp_matches_quadrature_and_is_asymmetric() {
    let cfg = MetricsConfig::default();
    let mut rng = SplitMix(7);
    let skewed: Vec<f64> = (0..200).map(|_| -2.0 * rng.uniform().max(1e-12).ln()).collect();
    let normal: Vec<f64> = (0..200).map(|_| 1.0 + rng.normal()).collect();
    let ab = d_stsp(&skewed, &normal, 1, &cfg, 2).unwrap();
    let ba = d_stsp(&normal, &skewed, 1, &cfg, 2).unwrap();
    let (qab, qba) = (kl_quadrature(&skewed, &normal), kl_quadrature(&normal, &skewed));
    assert!((ab - qab).abs() < 0.05, "{ab} vs {qab}");
    assert!((ba - qba).abs() < 0.05, "{ba} vs {qba}");
    assert!((qab - qba).abs() > 0.1, "oracle values {qab}, {qba} are too close to show asymmetry");
}

struct Offset(f64);

impl Forecaster for Offset {
    fn name(&self) -> &str {
        "offset"
    }

    fn forecast(&self, case: &TestCase, steps: usize) -> Result<Trajectory> {
        let rows: Vec<Vec<f64>> = case.target.rows().take(steps).map(|r| r.iter().map(|v| v + self.0).collect()).collect();
        Ok(traj(&rows))
    }
}

/// Forecasts with some seeded noise; diverges on the listed cases.
struct Noisy {
    sigma: f64,
    diverge: Vec<usize>,
}

impl Forecaster for Noisy {
    fn name(&self) -> &str {
        "noisy"
    }

    fn forecast(&self, case: &TestCase, steps: usize) -> Result<Trajectory> {
        let key = (case.context.row(0)[0].to_bits()) ^ 0x55;
        if self.diverge.iter().any(|&d| case.context.row(0)[0] == d as f64) {
            return Err(Error::RolloutDiverged { step: 7 });
        }
        let mut rng = SplitMix(key);
        let rows: Vec<Vec<f64>> = case
            .target
            .rows()
            .take(steps)
            .map(|r| r.iter().map(|v| v + self.sigma * rng.normal()).collect())
            .collect();
        Ok(traj(&rows))
    }
}

/// Cases whose first context value is the case index, so stubs can recognise them.
fn synthetic_cases(n: usize) -> Vec<TestCase> {
    let mut rng = SplitMix(9);
    (0..n)
        .map(|k| {
            let mut context = random_rows(&mut rng, 30, 3);
            context[0][0] = k as f64;
            // A noisy circle: a 1-D attractor with structure at every scale used.
            let target: Vec<Vec<f64>> = (0..300)
                .map(|t| {
                    let a = t as f64 * 0.21 + k as f64;
                    vec![3.0 * a.cos(), 3.0 * a.sin(), 0.5 * (2.0 * a).sin() + 0.05 * rng.normal()]
                })
                .collect();
            TestCase { context: traj(&context), target: traj(&target) }
        })
        .collect()
}

#[test]
fn one_step_mae_of_stubs() {
    let cases = synthetic_cases(4);
    assert_eq!(one_step_mae(&OracleForecaster, &cases).unwrap(), 0.0);
    assert!((one_step_mae(&Offset(0.25), &cases).unwrap() - 0.25).abs() < 1e-12);
    let noisy = Noisy { sigma: 0.4, diverge: vec![] };
    let want: f64 = cases
        .iter()
        .map(|c| {
            let p = noisy.forecast(c, 1).unwrap();
            c.target.row(0).iter().zip(p.row(0)).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0
        })
        .sum::<f64>()
        / 4.0;
    assert!((one_step_mae(&noisy, &cases).unwrap() - want).abs() < 1e-12);
}

#[test]
fn oracle_forecaster_scores_perfectly() {
    let cases = synthetic_cases(5);
    let cfg = MetricsConfig::default();
    let r = evaluate(&OracleForecaster, &cases, &cfg, &Standardizer::identity(3), 3).unwrap();
    assert_eq!(r.vpt_tl, 10.0);
    assert!(r.smape_at.values().all(|&v| v == 0.0));
    assert_eq!(r.smape_at.keys().copied().collect::<Vec<_>>(), vec![1, 4, 10]);
    assert_eq!(r.one_step_mae, 0.0);
    assert_eq!(r.d_frac, 0.0);
    assert!(r.d_stsp.abs() < 3.0 / (cfg.mc_samples as f64).sqrt());
    assert_eq!((r.n_test_cases, r.n_excluded), (5, 0));
}

#[test]
fn persistence_is_poor_on_lorenz() {
    let split = SplitConfig::new(30);
    let sim = SimulatedTests {
        system: OdeSystem::lorenz63(),
        dt: 0.001,
        stride: 37,
        n_ics: 5,
        transient_steps: 11_100,
        noise_sigma: 0.0,
    };
    let cases = simulate_test_cases(&sim, &split, 3).unwrap();
    let std = Standardizer::fit(&cases[0].target);
    let r = evaluate(&PersistenceForecaster, &cases, &MetricsConfig::default(), &std, 1).unwrap();
    assert!(r.vpt_tl < 1.0, "persistence VPT {}", r.vpt_tl);
}

#[test]
fn diverged_cases_are_excluded() {
    let cases = synthetic_cases(6);
    let cfg = MetricsConfig::default();
    let std = Standardizer::identity(3);
    let some = Noisy { sigma: 0.1, diverge: vec![1, 4] };
    let r = evaluate(&some, &cases, &cfg, &std, 0).unwrap();
    assert_eq!((r.n_test_cases, r.n_excluded), (4, 2));
    assert_eq!(r.excluded.iter().map(|e| e.case).collect::<Vec<_>>(), vec![1, 4]);
    assert_eq!(r.cases.iter().map(|c| c.case).collect::<Vec<_>>(), vec![0, 2, 3, 5]);
    let all = Noisy { sigma: 0.1, diverge: (0..6).collect() };
    assert!(matches!(evaluate(&all, &cases, &cfg, &std, 0), Err(Error::Evaluation(_))));
}

#[test]
fn aggregates_match_case_loop() {
    let cases = synthetic_cases(6);
    let r = evaluate(&Noisy { sigma: 0.3, diverge: vec![] }, &cases, &MetricsConfig::default(), &Standardizer::identity(3), 5).unwrap();
    let n = r.cases.len() as f64;
    let mean = |f: &dyn Fn(&CaseMetrics) -> f64| r.cases.iter().map(f).sum::<f64>() / n;
    let sd = |f: &dyn Fn(&CaseMetrics) -> f64| {
        let m = mean(f);
        (r.cases.iter().map(|c| (f(c) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    assert!((r.vpt_tl - mean(&|c| c.vpt_tl)).abs() < 1e-12);
    assert!((r.d_stsp - mean(&|c| c.d_stsp)).abs() < 1e-12);
    assert!((r.one_step_mae - mean(&|c| c.one_step_mae)).abs() < 1e-12);
    assert!((r.d_frac - mean(&|c| (c.dim_truth - c.dim_pred).powi(2)).sqrt()).abs() < 1e-12);
    for (h, v) in &r.smape_at {
        assert!((v - mean(&|c| c.smape_at[h])).abs() < 1e-12);
    }
    assert!((r.ci95.vpt_tl - 1.96 * sd(&|c| c.vpt_tl) / n.sqrt()).abs() < 1e-12);
    assert!((r.ci95.d_stsp - 1.96 * sd(&|c| c.d_stsp) / n.sqrt()).abs() < 1e-12);
}

fn case_with_dims(case: usize, dim_truth: f64, dim_pred: f64) -> CaseMetrics {
    CaseMetrics {
        case,
        vpt_tl: 1.0,
        smape_at: BTreeMap::from([(1, 10.0)]),
        one_step_mae: 0.1,
        dim_truth,
        dim_pred,
        dim_pred_degenerate: false,
        d_stsp: 0.2,
    }
}

#[test]
fn single_case_fractal_error() {
    let r = aggregate("stub", vec![case_with_dims(0, 2.0, 1.5)], vec![]);
    assert_eq!(r.d_frac, 0.5);
    assert_eq!(r.ci95.vpt_tl, 0.0);
    assert_eq!(mean_ci95(&[1.0, 3.0]), (2.0, 1.96 * 2f64.sqrt() / 2f64.sqrt()));
}

#[test]
fn report_round_trips_through_json() {
    let cases = synthetic_cases(3);
    let r = evaluate(&Noisy { sigma: 0.2, diverge: vec![2] }, &cases, &MetricsConfig::default(), &Standardizer::identity(3), 4).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    let back: MetricsReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    let csv = r.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "case,vpt_tl,smape_at_1,smape_at_4,smape_at_10,one_step_mae,dim_truth,dim_pred,d_stsp");
    assert_eq!(csv.lines().count(), 1 + r.cases.len());
}
