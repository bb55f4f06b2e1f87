use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::numcore::{Tape, Tensor, Var};

/// Keeps the multi-patch norm differentiable at a perfect prediction.
const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Teacher,
    Student,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Teacher => "teacher",
            Stage::Student => "student",
        }
    }
}

/// Loss components of one batch (or an average of batches).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub stage: Stage,
    pub l_next: f64,
    /// One entry per multi-patch depth.
    pub l_mpp: Vec<f64>,
    pub l_stu: f64,
    /// `None` when the regulariser is disabled.
    pub mmd_hist_pred: Option<f64>,
    pub mmd_gt_pred: Option<f64>,
    pub total: f64,
}

impl LossReport {
    /// The weighted objective rebuilt from its components.
    pub fn recompose(&self, cfg: &TrainConfig) -> f64 {
        match self.stage {
            Stage::Teacher => {
                if self.l_mpp.is_empty() {
                    self.l_next
                } else {
                    let s: f64 = self.l_mpp.iter().sum();
                    self.l_next + s * (cfg.lambda_p / self.l_mpp.len() as f64)
                }
            }
            Stage::Student => match (self.mmd_hist_pred, self.mmd_gt_pred) {
                (Some(h), Some(g)) => self.l_stu + (h + g * cfg.lambda_c) * cfg.lambda_r,
                _ => self.l_stu,
            },
        }
    }

    /// Componentwise mean of several reports of the same stage.
    pub fn mean(reports: &[LossReport]) -> Option<LossReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&LossReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let opt = |f: &dyn Fn(&LossReport) -> Option<f64>| {
            reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        Some(LossReport {
            stage: first.stage,
            l_next: avg(&|r| r.l_next),
            l_mpp: (0..first.l_mpp.len()).map(|k| avg(&|r| r.l_mpp[k])).collect(),
            l_stu: avg(&|r| r.l_stu),
            mmd_hist_pred: opt(&|r| r.mmd_hist_pred),
            mmd_gt_pred: opt(&|r| r.mmd_gt_pred),
            total: avg(&|r| r.total),
        })
    }
}

fn check_pairs(op: &'static str, truth: &[Tensor], pred: &[Tensor]) -> Result<usize> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::Shape {
            op,
            lhs: vec![truth.len()],
            rhs: vec![pred.len()],
        });
    }
    let shape = truth[0].shape();
    for (a, b) in truth.iter().zip(pred) {
        if a.shape() != shape || b.shape() != shape || shape.len() != 2 {
            return Err(Error::Shape {
                op,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
    }
    Ok(shape[0])
}

fn row_sq_errors<'a>(truth: &'a [Tensor], pred: &'a [Tensor]) -> impl Iterator<Item = f64> + 'a {
    truth.iter().zip(pred).flat_map(|(a, b)| {
        let w = a.shape()[1];
        a.data()
            .chunks(w)
            .zip(b.data().chunks(w))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
            .collect::<Vec<_>>()
    })
}

/// Mean over batch and predicted positions of the squared patch error.
/// `truth[i]` and `pred[i]` are `[B, width]` for the same target patch.
pub fn loss_next(truth: &[Tensor], pred: &[Tensor]) -> Result<f64> {
    let b = check_pairs("loss_next", truth, pred)?;
    Ok(row_sq_errors(truth, pred).sum::<f64>() / (truth.len() * b) as f64)
}

/// Mean over batch and anchors of the patch error norm (squared if asked).
pub fn loss_mpp(truth: &[Tensor], pred: &[Tensor], squared: bool) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::NotEnoughPatches { have: 0, need: 1 });
    }
    let b = check_pairs("loss_mpp", truth, pred)?;
    let s: f64 = row_sq_errors(truth, pred).map(|e| if squared { e } else { e.sqrt() }).sum();
    Ok(s / (truth.len() * b) as f64)
}

/// Rational-quadratic mixture `Σ_q σ_q² / (σ_q² + ‖u − v‖²)`.
pub fn rq_kernel(u: &[f64], v: &[f64], sigmas: &[f64]) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    sigmas.iter().map(|s| s * s / (s * s + d2)).sum()
}

fn kernel_mean(x: &Tensor, y: &Tensor, sigmas: &[f64]) -> f64 {
    let v = x.shape()[1];
    let mut s = 0.0;
    for a in x.data().chunks(v) {
        for b in y.data().chunks(v) {
            s += rq_kernel(a, b, sigmas);
        }
    }
    s / (x.shape()[0] * y.shape()[0]) as f64
}

/// Biased squared MMD between sample sets `x: [n, V]` and `y: [m, V]`.
/// Each block is averaged over its own pairs, so `n ≠ m` is allowed.
pub fn mmd2(x: &Tensor, y: &Tensor, sigmas: &[f64]) -> Result<f64> {
    if x.shape().len() != 2 || y.shape().len() != 2 || x.shape()[1] != y.shape()[1] {
        return Err(Error::Shape {
            op: "mmd2",
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    if x.shape()[0] == 0 || y.shape()[0] == 0 {
        return Err(Error::EmptySamples);
    }
    let v = kernel_mean(x, x, sigmas) + kernel_mean(y, y, sigmas) - 2.0 * kernel_mean(x, y, sigmas);
    Ok(v.max(0.0))
}

/// Student-forcing objective from ground-truth and rolled-out patches and
/// pooled state sets (history `u`, predicted `v`, ground-truth future `w`).
pub fn loss_student(
    truth: &[Tensor],
    rolled: &[Tensor],
    hist: &Tensor,
    pred: &Tensor,
    gt: &Tensor,
    cfg: &TrainConfig,
) -> Result<LossReport> {
    let mut tape = Tape::new();
    let t: Vec<Var> = truth.iter().map(|x| tape.constant(x.clone())).collect();
    let r: Vec<Var> = rolled.iter().map(|x| tape.constant(x.clone())).collect();
    let (h, p, g) = (tape.constant(hist.clone()), tape.constant(pred.clone()), tape.constant(gt.clone()));
    check_pairs("loss_student", truth, rolled)?;
    Ok(student_objective(&mut tape, &t, &r, h, p, g, cfg)?.1)
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).item()
}

/// `(1/(n·B)) Σ ‖truth − pred‖²` on the tape.
pub(crate) fn sq_error_mean(tape: &mut Tape, truth: &[Var], pred: &[Var]) -> Result<Var> {
    let b = tape.shape(truth[0])[0];
    let mut acc: Option<Var> = None;
    for (&a, &p) in truth.iter().zip(pred) {
        let d = tape.sub(p, a)?;
        let sq = tape.square(d)?;
        let s = tape.sum(sq)?;
        acc = Some(match acc {
            Some(x) => tape.add(x, s)?,
            None => s,
        });
    }
    tape.scale(acc.expect("at least one pair"), 1.0 / (truth.len() * b) as f64)
}

/// Mean patch error norm on the tape.
pub(crate) fn norm_error_mean(tape: &mut Tape, truth: &[Var], pred: &[Var], squared: bool) -> Result<Var> {
    if !squared {
        let b = tape.shape(truth[0])[0];
        let mut acc: Option<Var> = None;
        for (&a, &p) in truth.iter().zip(pred) {
            let d = tape.sub(p, a)?;
            let sq = tape.square(d)?;
            let rows = tape.sum_axis(sq, 1)?;
            let rows = tape.add_scalar(rows, NORM_EPS)?;
            let norms = tape.sqrt(rows)?;
            let s = tape.sum(norms)?;
            acc = Some(match acc {
                Some(x) => tape.add(x, s)?,
                None => s,
            });
        }
        return tape.scale(acc.expect("at least one pair"), 1.0 / (truth.len() * b) as f64);
    }
    sq_error_mean(tape, truth, pred)
}

fn kernel_mean_var(tape: &mut Tape, x: Var, y: Var, sigmas: &[f64]) -> Result<Var> {
    let d2 = tape.pairwise_sq_dist(x, y)?;
    let mut acc: Option<Var> = None;
    for &s in sigmas {
        let k = tape.add_scalar(d2, s * s)?;
        let k = tape.recip(k)?;
        let k = tape.scale(k, s * s)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, k)?,
            None => k,
        });
    }
    tape.mean(acc.expect("sigmas are non-empty"))
}

/// Differentiable biased MMD² (no clamping).
pub(crate) fn mmd2_var(tape: &mut Tape, x: Var, y: Var, sigmas: &[f64]) -> Result<Var> {
    let kxx = kernel_mean_var(tape, x, x, sigmas)?;
    let kyy = kernel_mean_var(tape, y, y, sigmas)?;
    let kxy = kernel_mean_var(tape, x, y, sigmas)?;
    let s = tape.add(kxx, kyy)?;
    let c = tape.scale(kxy, 2.0)?;
    tape.sub(s, c)
}

/// Teacher-forcing objective `L_next + (λ_p/M) Σ_m L_MPP^m`.
/// `mpp[m]` pairs targets and predictions at depth `m + 1`.
pub(crate) fn teacher_objective(
    tape: &mut Tape,
    next: (&[Var], &[Var]),
    mpp: &[(Vec<Var>, Vec<Var>)],
    cfg: &TrainConfig,
) -> Result<(Var, LossReport)> {
    let l_next = sq_error_mean(tape, next.0, next.1)?;
    let mut report = LossReport {
        stage: Stage::Teacher,
        l_next: scalar(tape, l_next),
        l_mpp: Vec::with_capacity(mpp.len()),
        l_stu: 0.0,
        mmd_hist_pred: None,
        mmd_gt_pred: None,
        total: 0.0,
    };
    let mut total = l_next;
    if !mpp.is_empty() {
        let mut acc: Option<Var> = None;
        for (truth, pred) in mpp {
            if pred.is_empty() {
                return Err(Error::NotEnoughPatches { have: 0, need: 1 });
            }
            let l = norm_error_mean(tape, truth, pred, cfg.mpp_squared)?;
            report.l_mpp.push(scalar(tape, l));
            acc = Some(match acc {
                Some(a) => tape.add(a, l)?,
                None => l,
            });
        }
        let weighted = tape.scale(acc.expect("non-empty"), cfg.lambda_p / mpp.len() as f64)?;
        total = tape.add(total, weighted)?;
    }
    report.total = scalar(tape, total);
    Ok((total, report))
}

/// Student-forcing objective on the tape.
pub(crate) fn student_objective(
    tape: &mut Tape,
    truth: &[Var],
    rolled: &[Var],
    hist: Var,
    pred: Var,
    gt: Var,
    cfg: &TrainConfig,
) -> Result<(Var, LossReport)> {
    let l_stu = sq_error_mean(tape, truth, rolled)?;
    let mut report = LossReport {
        stage: Stage::Student,
        l_next: 0.0,
        l_mpp: Vec::new(),
        l_stu: scalar(tape, l_stu),
        mmd_hist_pred: None,
        mmd_gt_pred: None,
        total: 0.0,
    };
    let mut total = l_stu;
    if cfg.mmd_enabled {
        for v in [hist, pred, gt] {
            if tape.shape(v)[0] == 0 {
                return Err(Error::EmptySamples);
            }
        }
        let hp = mmd2_var(tape, hist, pred, &cfg.kernel_sigmas)?;
        let gp = mmd2_var(tape, gt, pred, &cfg.kernel_sigmas)?;
        report.mmd_hist_pred = Some(scalar(tape, hp));
        report.mmd_gt_pred = Some(scalar(tape, gp));
        let inner = tape.scale(gp, cfg.lambda_c)?;
        let inner = tape.add(hp, inner)?;
        let reg = tape.scale(inner, cfg.lambda_r)?;
        total = tape.add(total, reg)?;
    }
    report.total = scalar(tape, total);
    Ok((total, report))
}
