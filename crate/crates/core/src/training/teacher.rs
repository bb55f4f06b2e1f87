use super::losses::{sq_error_mean, teacher_objective, LossReport, Stage};
use super::windows::Windows;
use super::{run_stage, StageLog, StagePlan, TrainConfig};
use crate::dynamics::DatasetSplit;
use crate::error::{Error, Result};
use crate::model::{generate, teacher_forward, Graph, Model, StackState};
use crate::numcore::{Tensor, Var};

fn patch_vars(g: &mut Graph, w: &Windows, idx: &[usize], n: usize) -> Vec<Var> {
    let d = g.model.patch_size();
    (0..n).map(|p| g.constant(w.patches(g.model, idx, p * d))).collect()
}

fn n_patches(model: &Model, w: &Windows) -> Result<usize> {
    let n = w.len / model.patch_size();
    let need = if model.config.effective_mpp_depth() > 0 {
        model.config.effective_mpp_depth() + 2
    } else {
        2
    };
    if n < need {
        return Err(Error::NotEnoughPatches { have: n, need });
    }
    Ok(n)
}

fn teacher_step(model: &Model, w: &Windows, idx: &[usize], cfg: &TrainConfig) -> Result<(Vec<Tensor>, LossReport)> {
    let n = n_patches(model, w)?;
    let mut g = Graph::new(model);
    let vars = patch_vars(&mut g, w, idx, n);
    let out = teacher_forward(&mut g, &vars)?;
    let mpp: Vec<(Vec<Var>, Vec<Var>)> = out
        .mpp
        .iter()
        .enumerate()
        .map(|(m, preds)| ((0..preds.len()).map(|i| vars[i + m + 2]).collect(), preds.clone()))
        .collect();
    let (loss, report) = teacher_objective(g.tape(), (&vars[1..], &out.next), &mpp, cfg)?;
    let grads = g.sess.tape.backward(loss)?;
    Ok((g.sess.param_grads(&grads), report))
}

/// Window-head objective: one window of context, the next window as target,
/// as a squared error per `D`-step block.
fn window_loss(g: &mut Graph, w: &Windows, idx: &[usize], cfg: &TrainConfig) -> Result<(Var, LossReport)> {
    let model = g.model;
    let wl = model.window_len();
    let ctx = w.states(idx, 0, wl);
    let gen = generate(g, ctx.data(), idx.len(), wl, 1, cfg.envelope)?;
    let truth = g.constant(w.states(idx, wl, 2 * wl));
    let t = g.tape();
    let l = sq_error_mean(t, &[truth], &[gen.states[0]])?;
    let l = t.scale(l, 1.0 / model.context_patches as f64)?;
    let v = t.value(l).item();
    Ok((
        l,
        LossReport {
            stage: Stage::Teacher,
            l_next: v,
            l_mpp: Vec::new(),
            l_stu: 0.0,
            mmd_hist_pred: None,
            mmd_gt_pred: None,
            total: v,
        },
    ))
}

/// Next-patch validation loss (no multi-patch modules), averaged over all windows.
fn validate(model: &Model, w: &Windows, cfg: &TrainConfig) -> Result<Option<f64>> {
    if w.is_empty() {
        return Ok(None);
    }
    let all: Vec<usize> = (0..w.count).collect();
    let mut sum = 0.0;
    for idx in all.chunks(cfg.batch_size) {
        let mut g = Graph::frozen(model);
        let l = if model.config.encoder_oriented {
            match window_loss(&mut g, w, idx, cfg) {
                Ok((_, r)) => r.l_next,
                Err(Error::RolloutDiverged { .. }) => return Ok(Some(f64::INFINITY)),
                Err(e) => return Err(e),
            }
        } else {
            let n = w.len / model.patch_size();
            let vars = patch_vars(&mut g, w, idx, n);
            let mut state = StackState::new(model.config.layers);
            let mut preds = Vec::with_capacity(n - 1);
            for &p in &vars[..n - 1] {
                let s = g.embed(p)?;
                let e = g.trunk(s, &mut state)?.e;
                preds.push(g.decode(e)?);
            }
            let l = sq_error_mean(g.tape(), &vars[1..], &preds)?;
            g.sess.tape.value(l).item()
        };
        sum += l * idx.len() as f64;
    }
    Ok(Some(sum / w.count as f64))
}

/// Teacher-forcing stage. Ground-truth patches feed every position; the
/// window-head variant trains on the longer student-forcing windows instead.
pub fn train_teacher_forcing(model: &mut Model, data: &DatasetSplit, cfg: &TrainConfig) -> Result<StageLog> {
    cfg.validate()?;
    let encoder = model.config.encoder_oriented;
    let (train, val) = if encoder {
        (Windows::new(model, &data.sf_train)?, Windows::new(model, &data.sf_val)?)
    } else {
        (Windows::new(model, &data.tf_train)?, Windows::new(model, &data.tf_val)?)
    };
    if train.is_empty() {
        return Err(Error::DatasetTooShort {
            required: 1,
            actual: 0,
        });
    }
    if encoder {
        if train.len < 2 * model.window_len() {
            return Err(Error::DatasetTooShort {
                required: 2 * model.window_len(),
                actual: train.len,
            });
        }
    } else {
        n_patches(model, &train)?;
    }
    let plan = StagePlan {
        stage: Stage::Teacher,
        lr: cfg.tf_lr,
        epochs: cfg.tf_epochs,
        max_steps: cfg.tf_max_steps,
        n_train: train.count,
    };
    run_stage(
        model,
        cfg,
        plan,
        |m, idx| {
            if encoder {
                let mut g = Graph::new(m);
                let (loss, report) = window_loss(&mut g, &train, idx, cfg)?;
                let grads = g.sess.tape.backward(loss)?;
                Ok((g.sess.param_grads(&grads), report))
            } else {
                teacher_step(m, &train, idx, cfg)
            }
        },
        |m| validate(m, &val, cfg),
    )
}
