use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attractor::{correlation_dimension, d_stsp};
use super::config::MetricsConfig;
use super::pointwise::{first_step_mae, smape_at, steps_per_tl, vpt};
use crate::dynamics::{Standardizer, TestCase, Trajectory};
use crate::error::{Error, Result};
use crate::model::{autoregressive_rollout, Model, DEFAULT_ENVELOPE};

/// Anything that continues a test case's context.
pub trait Forecaster: Sync {
    fn name(&self) -> &str;

    /// `steps` states following `case.context`. Only the oracle reads `case.target`.
    fn forecast(&self, case: &TestCase, steps: usize) -> Result<Trajectory>;
}

/// The trained network, rolled out autoregressively.
pub struct ModelForecaster<'m> {
    pub model: &'m Model,
    pub envelope: f64,
}

impl<'m> ModelForecaster<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self {
            model,
            envelope: DEFAULT_ENVELOPE,
        }
    }
}

impl Forecaster for ModelForecaster<'_> {
    fn name(&self) -> &str {
        "model"
    }

    fn forecast(&self, case: &TestCase, steps: usize) -> Result<Trajectory> {
        let patches = steps.div_ceil(self.model.patch_size());
        autoregressive_rollout(self.model, &case.context, patches, self.envelope)?.window(0, steps)
    }
}

/// Returns the ground truth (debugging and metric sanity checks).
pub struct OracleForecaster;

impl Forecaster for OracleForecaster {
    fn name(&self) -> &str {
        "oracle"
    }

    fn forecast(&self, case: &TestCase, steps: usize) -> Result<Trajectory> {
        case.target.window(0, steps.min(case.target.len()))
    }
}

/// Repeats the last observed state.
pub struct PersistenceForecaster;

impl Forecaster for PersistenceForecaster {
    fn name(&self) -> &str {
        "persistence"
    }

    fn forecast(&self, case: &TestCase, steps: usize) -> Result<Trajectory> {
        let c = &case.context;
        if c.is_empty() {
            return Err(Error::InvalidInput("empty context".into()));
        }
        let last = c.row(c.len() - 1);
        let rows: Vec<f64> = (0..steps).flat_map(|_| last.iter().copied()).collect();
        Ok(Trajectory::new(rows, c.dim(), c.dt())?.with_steps_per_lyapunov_time(c.steps_per_lyapunov_time()))
    }
}

/// Mean absolute error of the first forecast step, averaged over cases.
pub fn one_step_mae(f: &dyn Forecaster, cases: &[TestCase]) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::Evaluation("no test cases".into()));
    }
    let mut s = 0.0;
    for case in cases {
        s += first_step_mae(&case.target, &f.forecast(case, 1)?)?;
    }
    Ok(s / cases.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case: usize,
    pub vpt_tl: f64,
    pub smape_at: BTreeMap<usize, f64>,
    pub one_step_mae: f64,
    pub dim_truth: f64,
    pub dim_pred: f64,
    /// A collapsed cloud (fixed point) is given dimension 0.
    pub dim_pred_degenerate: bool,
    pub d_stsp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCase {
    pub case: usize,
    pub reason: String,
}

/// Half-widths `1.96·sd/√n` of the per-case means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ci95 {
    pub vpt_tl: f64,
    pub smape_at: BTreeMap<usize, f64>,
    pub one_step_mae: f64,
    pub d_frac: f64,
    pub d_stsp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub forecaster: String,
    pub vpt_tl: f64,
    pub smape_at: BTreeMap<usize, f64>,
    pub one_step_mae: f64,
    pub d_frac: f64,
    pub d_stsp: f64,
    pub n_test_cases: usize,
    pub n_excluded: usize,
    pub ci95: Ci95,
    pub excluded: Vec<ExcludedCase>,
    pub cases: Vec<CaseMetrics>,
}

/// Mean and 95% half-width.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, 1.96 * var.sqrt() / n.sqrt())
}

fn dimension_or_zero(t: &Trajectory, cfg: &MetricsConfig, seed: u64) -> Result<(f64, bool)> {
    match correlation_dimension(t.states(), t.dim(), cfg, seed) {
        Ok(d) => Ok((d, false)),
        Err(Error::DegenerateAttractor(_)) => Ok((0.0, true)),
        Err(e) => Err(e),
    }
}

fn case_metrics(
    k: usize,
    case: &TestCase,
    f: &dyn Forecaster,
    cfg: &MetricsConfig,
    standardizer: &Standardizer,
    seed: u64,
) -> Result<CaseMetrics> {
    let steps = case.target.len();
    let pred = f.forecast(case, steps)?;
    if pred.len() != steps || pred.dim() != case.target.dim() {
        return Err(Error::Evaluation(format!(
            "{} returned {}×{} states for a {}×{} target",
            f.name(),
            pred.len(),
            pred.dim(),
            steps,
            case.target.dim()
        )));
    }
    let truth = &case.target;
    let ppt = steps_per_tl(truth, cfg)?;
    let mut smape = BTreeMap::new();
    for &h in &cfg.smape_horizons {
        if h * ppt <= steps {
            smape.insert(h, smape_at(truth, &pred, h, cfg)?);
        }
    }
    let case_seed = seed.wrapping_add(k as u64);
    let (dim_truth, _) = dimension_or_zero(truth, cfg, case_seed)?;
    let (dim_pred, dim_pred_degenerate) = dimension_or_zero(&pred, cfg, case_seed)?;
    let zt = standardizer.transform(truth);
    let zp = standardizer.transform(&pred);
    Ok(CaseMetrics {
        case: k,
        vpt_tl: vpt(truth, &pred, cfg)?,
        smape_at: smape,
        one_step_mae: first_step_mae(truth, &pred)?,
        dim_truth,
        dim_pred,
        dim_pred_degenerate,
        d_stsp: d_stsp(zt.states(), zp.states(), truth.dim(), cfg, case_seed)?,
    })
}

/// Forecasts every case over its full target and aggregates the metrics.
/// Cases whose rollout diverges are excluded and counted.
pub fn evaluate(
    f: &dyn Forecaster,
    cases: &[TestCase],
    cfg: &MetricsConfig,
    standardizer: &Standardizer,
    seed: u64,
) -> Result<MetricsReport> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Evaluation("no test cases".into()));
    }
    let results: Vec<Result<CaseMetrics>> = cases
        .par_iter()
        .enumerate()
        .map(|(k, c)| case_metrics(k, c, f, cfg, standardizer, seed))
        .collect();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => kept.push(m),
            Err(e @ Error::RolloutDiverged { .. }) => {
                log::warn!("case {k} excluded: {e}");
                excluded.push(ExcludedCase {
                    case: k,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::Evaluation(format!("all {} test cases diverged", cases.len())));
    }
    Ok(aggregate(f.name(), kept, excluded))
}

/// Means and intervals over the kept cases.
pub fn aggregate(name: &str, cases: Vec<CaseMetrics>, excluded: Vec<ExcludedCase>) -> MetricsReport {
    let col = |g: &dyn Fn(&CaseMetrics) -> f64| mean_ci95(&cases.iter().map(g).collect::<Vec<_>>());
    let (vpt_tl, vpt_ci) = col(&|c| c.vpt_tl);
    let (mae, mae_ci) = col(&|c| c.one_step_mae);
    let (stsp, stsp_ci) = col(&|c| c.d_stsp);
    let (sq, sq_ci) = col(&|c| (c.dim_truth - c.dim_pred).powi(2));
    let d_frac = sq.sqrt();
    // Delta method for the square root of a mean.
    let d_frac_ci = if d_frac > 0.0 { sq_ci / (2.0 * d_frac) } else { 0.0 };
    let mut smape = BTreeMap::new();
    let mut smape_ci = BTreeMap::new();
    let horizons: Vec<usize> = cases.first().map(|c| c.smape_at.keys().copied().collect()).unwrap_or_default();
    for h in horizons {
        let (m, ci) = col(&|c| c.smape_at[&h]);
        smape.insert(h, m);
        smape_ci.insert(h, ci);
    }
    MetricsReport {
        forecaster: name.to_string(),
        vpt_tl,
        smape_at: smape,
        one_step_mae: mae,
        d_frac,
        d_stsp: stsp,
        n_test_cases: cases.len(),
        n_excluded: excluded.len(),
        ci95: Ci95 {
            vpt_tl: vpt_ci,
            smape_at: smape_ci,
            one_step_mae: mae_ci,
            d_frac: d_frac_ci,
            d_stsp: stsp_ci,
        },
        excluded,
        cases,
    }
}

impl MetricsReport {
    /// One row per kept case.
    pub fn to_csv(&self) -> String {
        let horizons: Vec<usize> = self.smape_at.keys().copied().collect();
        let mut s = String::from("case,vpt_tl");
        for h in &horizons {
            let _ = write!(s, ",smape_at_{h}");
        }
        s.push_str(",one_step_mae,dim_truth,dim_pred,d_stsp\n");
        for c in &self.cases {
            let _ = write!(s, "{},{}", c.case, c.vpt_tl);
            for h in &horizons {
                let _ = write!(s, ",{}", c.smape_at[h]);
            }
            let _ = writeln!(s, ",{},{},{},{}", c.one_step_mae, c.dim_truth, c.dim_pred, c.d_stsp);
        }
        s
    }
}
