use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::MetricsConfig;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Rows of a row-major `[n, dim]` cloud, at most `cap` of them (seeded, order kept).
fn subsample_rows<'a>(points: &'a [f64], dim: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<&'a [f64]> {
    let n = points.len() / dim;
    let rows = |i: usize| &points[i * dim..(i + 1) * dim];
    if n <= cap {
        return (0..n).map(rows).collect();
    }
    let mut idx = sample(rng, n, cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(rows).collect()
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Grassberger–Procaccia estimate: least-squares slope of `ln C(r)` against
/// `ln r`, with `C(r)` the fraction of point pairs closer than `r` and radii
/// log-spaced between two quantiles of the positive pair distances.
pub fn correlation_dimension(points: &[f64], dim: usize, cfg: &MetricsConfig, seed: u64) -> Result<f64> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput(format!("{} values do not form rows of {dim}", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = subsample_rows(points, dim, cfg.gp_max_points, &mut rng);
    let n = rows.len();
    if n < 100 {
        return Err(Error::DegenerateAttractor(format!("{n} points; at least 100 are needed")));
    }
    let variance: f64 = (0..dim)
        .map(|k| {
            let m = rows.iter().map(|r| r[k]).sum::<f64>() / n as f64;
            rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>() / n as f64
        })
        .sum();
    if !(variance > 0.0) {
        return Err(Error::DegenerateAttractor("point cloud has zero variance".into()));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let pairs = dists.len() as f64;
    let first_pos = dists.partition_point(|&d| d <= 0.0);
    let positive = &dists[first_pos..];
    if positive.len() < 2 {
        return Err(Error::DegenerateAttractor("fewer than two distinct points".into()));
    }
    let (lo, hi) = (quantile_sorted(positive, cfg.gp_quantiles.0), quantile_sorted(positive, cfg.gp_quantiles.1));
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::DegenerateAttractor(format!("radius range [{lo}, {hi}] is empty")));
    }
    let k = cfg.gp_radii;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    for i in 0..k {
        let lr = llo + (lhi - llo) * i as f64 / (k - 1) as f64;
        let count = dists.partition_point(|&d| d < lr.exp());
        if count > 0 {
            xs.push(lr);
            ys.push((count as f64 / pairs).ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateAttractor("correlation sum vanishes on the radius grid".into()));
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// RMSE over cases between the correlation dimensions of targets and forecasts.
pub fn d_frac_error(truth: &[Trajectory], pred: &[Trajectory], cfg: &MetricsConfig, seed: u64) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} target and {} forecast trajectories",
            truth.len(),
            pred.len()
        )));
    }
    let mut s = 0.0;
    for (k, (t, p)) in truth.iter().zip(pred).enumerate() {
        let case = |e: Error| match e {
            Error::DegenerateAttractor(m) => Error::DegenerateAttractor(format!("case {k}: {m}")),
            other => other,
        };
        let dt = correlation_dimension(t.states(), t.dim(), cfg, seed).map_err(case)?;
        let dp = correlation_dimension(p.states(), p.dim(), cfg, seed).map_err(case)?;
        s += (dt - dp).powi(2);
    }
    Ok((s / truth.len() as f64).sqrt())
}

/// `ln` of an equal-weight isotropic mixture with one component per centre.
fn log_mixture(x: &[f64], centres: &[&[f64]], scale: f64, scratch: &mut Vec<f64>) -> f64 {
    let inv = 0.5 / (scale * scale);
    scratch.clear();
    scratch.extend(
        centres
            .iter()
            .map(|c| -c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * inv),
    );
    let m = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scratch.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let d = x.len() as f64;
    lse - (centres.len() as f64).ln() - 0.5 * d * (2.0 * std::f64::consts::PI * scale * scale).ln()
}

/// Monte-Carlo `KL(truth ‖ pred)` between Gaussian mixtures built on the two
/// clouds (rows of `[n, dim]`, standardized units), sampling from the truth mixture.
pub fn d_stsp(truth: &[f64], pred: &[f64], dim: usize, cfg: &MetricsConfig, seed: u64) -> Result<f64> {
    if dim == 0 || !truth.len().is_multiple_of(dim) || !pred.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput("state clouds must be rows of the state dimension".into()));
    }
    if truth.is_empty() || pred.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = subsample_rows(truth, dim, cfg.subsample_cap, &mut rng);
    let q = subsample_rows(pred, dim, cfg.subsample_cap, &mut rng);
    let mut x = vec![0.0; dim];
    let mut scratch = Vec::with_capacity(p.len().max(q.len()));
    let mut acc = 0.0;
    for _ in 0..cfg.mc_samples {
        let c = p[rng.random_range(0..p.len())];
        for (xi, ci) in x.iter_mut().zip(c) {
            let z: f64 = rng.sample(StandardNormal);
            *xi = ci + cfg.gmm_scale * z;
        }
        let lp = log_mixture(&x, &p, cfg.gmm_scale, &mut scratch).max(cfg.log_density_floor);
        let lq = log_mixture(&x, &q, cfg.gmm_scale, &mut scratch).max(cfg.log_density_floor);
        acc += lp - lq;
    }
    Ok(acc / cfg.mc_samples as f64)
}
