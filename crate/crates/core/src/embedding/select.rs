//! Data-driven choice of delay (average mutual information) and dimension
//! (neighbor-count saturation).

use crate::error::{Error, Result};

/// Selected value plus whether the selector had to fall back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub value: usize,
    pub fallback: bool,
}

/// Equiprobable bin index of every sample.
fn quantile_bins(series: &[f64], n_bins: usize) -> Result<Vec<usize>> {
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateDistribution("series is constant".into()));
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..n_bins).map(|k| sorted[k * n / n_bins]).collect();
    edges.dedup();
    Ok(series
        .iter()
        .map(|x| edges.partition_point(|e| e <= x))
        .collect())
}

/// AMI(τ) in nats for τ = 1..=tau_max from a joint histogram over quantile bins.
pub fn ami_curve(series: &[f64], tau_max: usize, n_bins: usize) -> Result<Vec<f64>> {
    if tau_max == 0 || series.len() <= tau_max || n_bins < 2 {
        return Err(Error::InvalidInput(format!(
            "need len ({}) > tau_max ({tau_max}) ≥ 1 and n_bins ({n_bins}) ≥ 2",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("series is not finite".into()));
    }
    let bins = quantile_bins(series, n_bins)?;
    let k = n_bins;
    let mut joint = vec![0usize; k * k];
    let (mut pa, mut pb) = (vec![0usize; k], vec![0usize; k]);
    let mut out = Vec::with_capacity(tau_max);
    for tau in 1..=tau_max {
        joint.iter_mut().for_each(|c| *c = 0);
        pa.iter_mut().for_each(|c| *c = 0);
        pb.iter_mut().for_each(|c| *c = 0);
        let n = series.len() - tau;
        for t in 0..n {
            let (a, b) = (bins[t], bins[t + tau]);
            joint[a * k + b] += 1;
            pa[a] += 1;
            pb[b] += 1;
        }
        let nf = n as f64;
        let mut mi = 0.0;
        for a in 0..k {
            for b in 0..k {
                let c = joint[a * k + b];
                if c > 0 {
                    let pab = c as f64 / nf;
                    mi += pab * (pab * nf * nf / (pa[a] as f64 * pb[b] as f64)).ln();
                }
            }
        }
        out.push(mi);
    }
    Ok(out)
}

/// First local minimum of an AMI curve (entry `i` is τ = i + 1); falls back to the global minimum.
pub fn select_tau(ami: &[f64]) -> Selection {
    for i in 1..ami.len().saturating_sub(1) {
        if ami[i - 1] > ami[i] && ami[i] < ami[i + 1] {
            return Selection {
                value: i + 1,
                fallback: false,
            };
        }
    }
    let best = ami
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i);
    Selection {
        value: best + 1,
        fallback: true,
    }
}

fn standardized(series: &[f64]) -> Result<Vec<f64>> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let sd = (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateDistribution("series is constant".into()));
    }
    Ok(series.iter().map(|x| (x - mean) / sd).collect())
}

/// F(m) for m = 1..=m_max: mean log neighbor count in m-dimensional delay space
/// (max-norm, self included, radius in standard deviations of the series).
pub fn fnn_curve(series: &[f64], tau: usize, m_max: usize, radius: f64) -> Result<Vec<f64>> {
    if m_max < 2 || tau == 0 || !(radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need m_max ≥ 2, tau ≥ 1, radius > 0 (got {m_max}, {tau}, {radius})"
        )));
    }
    let span = (m_max - 1) * tau;
    if series.len() <= span {
        return Err(Error::DatasetTooShort {
            required: span + 1,
            actual: series.len(),
        });
    }
    let z = standardized(series)?;
    let mut out = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let n = z.len() - (m - 1) * tau;
        let mut any_neighbor = false;
        let mut acc = 0.0;
        for i in 0..n {
            let count = (0..n)
                .filter(|&j| (0..m).all(|k| (z[i + k * tau] - z[j + k * tau]).abs() <= radius))
                .count();
            any_neighbor |= count > 1;
            acc += (count as f64).ln();
        }
        if n > 1 && !any_neighbor {
            return Err(Error::EmptyNeighborhood { m, radius });
        }
        out.push(acc / n as f64);
    }
    Ok(out)
}

/// Smallest m whose F(m) changes by less than `tol` relative to F(m−1); falls back to m_max.
pub fn select_m(fnn: &[f64], tol: f64) -> Selection {
    for m in 2..=fnn.len() {
        let (prev, cur) = (fnn[m - 2], fnn[m - 1]);
        if (cur - prev).abs() < tol * prev.abs() {
            return Selection {
                value: m,
                fallback: false,
            };
        }
    }
    Selection {
        value: fnn.len().max(1),
        fallback: true,
    }
}
