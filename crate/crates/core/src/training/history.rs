use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::losses::{LossReport, Stage};

/// Mean training losses of one epoch and the validation score used for early stopping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far in this stage.
    pub steps: usize,
    pub train: LossReport,
    pub val_loss: Option<f64>,
}

/// Loss curves of one stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub epochs: Vec<EpochRecord>,
    /// Per optimizer step: `L_next` when teacher forcing, the full objective when student forcing.
    pub step_losses: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Both stages, written as `losses.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub teacher: StageLog,
    pub student: Option<StageLog>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let depth = self
            .teacher
            .epochs
            .first()
            .map_or(0, |e| e.train.l_mpp.len());
        let mut s = String::from("stage,epoch,steps,l_next");
        for m in 1..=depth {
            let _ = write!(s, ",l_mpp{m}");
        }
        s.push_str(",l_stu,mmd_hist_pred,mmd_gt_pred,total,val_loss\n");
        let stages = [(Stage::Teacher, Some(&self.teacher)), (Stage::Student, self.student.as_ref())];
        for (stage, log) in stages {
            let Some(log) = log else { continue };
            for e in &log.epochs {
                let r = &e.train;
                let _ = write!(s, "{},{},{},{}", stage.name(), e.epoch, e.steps, r.l_next);
                for m in 0..depth {
                    let _ = write!(s, ",{}", opt(r.l_mpp.get(m).copied()));
                }
                let _ = writeln!(
                    s,
                    ",{},{},{},{},{}",
                    r.l_stu,
                    opt(r.mmd_hist_pred),
                    opt(r.mmd_gt_pred),
                    r.total,
                    opt(e.val_loss)
                );
            }
        }
        s
    }
}
