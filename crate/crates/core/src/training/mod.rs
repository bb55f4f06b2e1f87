//! Two-stage optimisation: teacher forcing with next-patch and multi-patch
//! losses, then student forcing through the model's own rollouts with an
//! MMD attractor regulariser.

mod config;
mod history;
mod losses;
mod student;
mod teacher;
mod windows;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{TrainConfig, DEFAULT_SIGMAS};
pub use history::{EpochRecord, StageLog, TrainingLog};
pub use losses::{loss_mpp, loss_next, loss_student, mmd2, rq_kernel, LossReport, Stage};
pub use student::train_student_forcing;
pub use teacher::train_teacher_forcing;

use crate::dynamics::DatasetSplit;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::{clip_grad_norm, Adam, AdamConfig, Tensor};

/// Teacher forcing followed (unless disabled or not applicable) by student forcing.
pub fn train(model: &mut Model, data: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    let teacher = train_teacher_forcing(model, data, cfg)?;
    let student = train_student_forcing(model, data, cfg)?;
    Ok(TrainingLog { teacher, student })
}

fn stage_seed(cfg: &TrainConfig, stage: Stage) -> u64 {
    let salt = match stage {
        Stage::Teacher => 0x7eac_11e5,
        Stage::Student => 0x57d_e175,
    };
    cfg.seed ^ salt
}

/// Rollout blow-ups and non-finite values become a training divergence at this batch.
fn diverged(e: Error, stage: Stage, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NumericOverflow { .. } | Error::RolloutDiverged { .. } => {
            log::error!("{} stage: {e} (epoch {epoch}, batch {batch})", stage.name());
            Error::TrainingDiverged {
                stage: stage.name(),
                epoch,
                batch,
            }
        }
        other => other,
    }
}

struct StagePlan {
    stage: Stage,
    lr: f64,
    epochs: usize,
    max_steps: Option<usize>,
    n_train: usize,
}

/// Shuffled mini-batch epochs with Adam, early stopping on the validation
/// score and restoration of the best parameters.
fn run_stage<S, V>(model: &mut Model, cfg: &TrainConfig, plan: StagePlan, mut step: S, val: V) -> Result<StageLog>
where
    S: FnMut(&Model, &[usize]) -> Result<(Vec<Tensor>, LossReport)>,
    V: Fn(&Model) -> Result<Option<f64>>,
{
    let mut log = StageLog::default();
    if plan.epochs == 0 || plan.n_train == 0 || plan.max_steps == Some(0) {
        return Ok(log);
    }
    let mut opt = Adam::new(
        AdamConfig {
            lr: plan.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg, plan.stage));
    let mut order: Vec<usize> = (0..plan.n_train).collect();
    let mut best: Option<(f64, crate::numcore::ParamStore, usize)> = None;
    let mut since_best = 0;
    let mut steps = 0;
    for epoch in 0..plan.epochs {
        order.shuffle(&mut rng);
        let mut reports = Vec::new();
        for (b, idx) in windows::batches(&order, cfg.batch_size).enumerate() {
            if plan.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let (mut grads, report) = step(model, idx).map_err(|e| diverged(e, plan.stage, epoch, b))?;
            if !report.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged(Error::NumericOverflow { op: "loss" }, plan.stage, epoch, b));
            }
            if let Some(c) = cfg.max_grad_norm {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(&mut model.params, &grads);
            log.step_losses.push(match plan.stage {
                Stage::Teacher => report.l_next,
                Stage::Student => report.total,
            });
            reports.push(report);
            steps += 1;
        }
        let Some(train) = LossReport::mean(&reports) else { break };
        let val_loss = val(model)?;
        log::info!(
            "{} epoch {epoch}: train {:.6} val {}",
            plan.stage.name(),
            train.total,
            val_loss.map_or("-".to_string(), |v| format!("{v:.6}"))
        );
        log.epochs.push(EpochRecord {
            epoch,
            steps,
            train,
            val_loss,
        });
        if let Some(v) = val_loss {
            let v = if v.is_finite() { v } else { f64::INFINITY };
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, model.params.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
        if plan.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
    }
    match best {
        Some((_, params, epoch)) => {
            model.params = params;
            log.best_epoch = Some(epoch);
        }
        None => log.best_epoch = log.epochs.last().map(|e| e.epoch),
    }
    Ok(log)
}
