use super::config::MetricsConfig;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `200·‖x − x̂‖ / (‖x‖ + ‖x̂‖)`, in `[0, 200]`; zero when both vanish.
pub fn smape_pointwise(x: &[f64], x_hat: &[f64]) -> f64 {
    let denom = norm(x) + norm(x_hat);
    if denom == 0.0 {
        return 0.0;
    }
    let diff: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    // Ratio first so antipodal pairs give exactly 200; the cap absorbs rounding.
    200.0 * (diff / denom).min(1.0)
}

/// Steps per Lyapunov time from the config, else from the truth trajectory.
pub(crate) fn steps_per_tl(truth: &Trajectory, cfg: &MetricsConfig) -> Result<usize> {
    cfg.steps_per_tl
        .or(truth.steps_per_lyapunov_time())
        .filter(|&k| k > 0)
        .ok_or_else(|| Error::InvalidInput("steps per Lyapunov time unknown; set metrics.steps_per_tl".into()))
}

fn check_aligned(truth: &Trajectory, pred: &Trajectory) -> Result<()> {
    if truth.dim() != pred.dim() {
        return Err(Error::Shape {
            op: "metrics",
            lhs: vec![truth.len(), truth.dim()],
            rhs: vec![pred.len(), pred.dim()],
        });
    }
    Ok(())
}

/// Mean pointwise sMAPE over the first `k_tl` Lyapunov times of the forecast.
pub fn smape_at(truth: &Trajectory, pred: &Trajectory, k_tl: usize, cfg: &MetricsConfig) -> Result<f64> {
    check_aligned(truth, pred)?;
    let steps = k_tl * steps_per_tl(truth, cfg)?;
    let have = truth.len().min(pred.len());
    if steps == 0 || have < steps {
        return Err(Error::HorizonTooShort { need: steps, have });
    }
    let s: f64 = (0..steps).map(|t| smape_pointwise(truth.row(t), pred.row(t))).sum();
    Ok(s / steps as f64)
}

/// Valid prediction time in Lyapunov times: steps before the pointwise
/// sMAPE first reaches `epsilon`, or the whole overlap if it never does.
pub fn vpt(truth: &Trajectory, pred: &Trajectory, cfg: &MetricsConfig) -> Result<f64> {
    check_aligned(truth, pred)?;
    let k = steps_per_tl(truth, cfg)?;
    let n = truth.len().min(pred.len());
    let valid = (0..n)
        .position(|t| smape_pointwise(truth.row(t), pred.row(t)) >= cfg.epsilon)
        .unwrap_or(n);
    Ok(valid as f64 / k as f64)
}

/// Mean absolute componentwise error of the first forecast step.
pub fn first_step_mae(truth: &Trajectory, pred: &Trajectory) -> Result<f64> {
    check_aligned(truth, pred)?;
    if truth.is_empty() || pred.is_empty() {
        return Err(Error::HorizonTooShort { need: 1, have: 0 });
    }
    let (a, b) = (truth.row(0), pred.row(0));
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
