use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::losses::{student_objective, LossReport, Stage};
use super::windows::Windows;
use super::{run_stage, stage_seed, StageLog, StagePlan, TrainConfig};
use crate::dynamics::DatasetSplit;
use crate::error::{Error, Result};
use crate::model::{generate, usable_context, Graph, Model};
use crate::numcore::{Tape, Tensor, Var};

/// Rollout geometry inside a student-forcing window.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    /// First forecast step (end of the context half).
    half: usize,
    /// Context steps consumed (the leading remainder of the half is dropped).
    ctx: usize,
    patches: usize,
}

fn geometry(model: &Model, len: usize, cfg: &TrainConfig) -> Result<Geometry> {
    let d = model.patch_size();
    let half = len / 2;
    let ctx = usable_context(model, half);
    let patches = cfg.sf_patches.unwrap_or((half / d).max(1));
    if ctx < d || half + patches * d > len {
        return Err(Error::DatasetTooShort {
            required: (half.max(d) + patches * d).max(2 * d),
            actual: len,
        });
    }
    Ok(Geometry { half, ctx, patches })
}

/// Rows `[n, V]` of a pooled `[rows, V]` state matrix picked by `rows_of`.
fn pick_rows(t: &mut Tape, x: Var, rows: &[usize], v: usize) -> Result<Var> {
    let idx: Vec<usize> = rows.iter().flat_map(|&r| (0..v).map(move |k| r * v + k)).collect();
    t.gather(x, idx, &[rows.len(), v])
}

fn subsample(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if n >= len {
        return (0..len).collect();
    }
    let mut rows = sample(rng, len, n).into_vec();
    rows.sort_unstable();
    rows
}

fn student_loss(
    g: &mut Graph,
    w: &Windows,
    idx: &[usize],
    geo: Geometry,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, LossReport)> {
    let model = g.model;
    let (b, v, d) = (idx.len(), model.dim, model.patch_size());
    let ctx = w.states(idx, geo.half - geo.ctx, geo.half);
    let gen = generate(g, ctx.data(), b, geo.ctx, geo.patches, cfg.envelope)?;
    let truth: Vec<Var> = (0..geo.patches)
        .map(|k| g.constant(w.patches(model, idx, geo.half + k * d)))
        .collect();
    let horizon = geo.patches * d;
    let hist = g.constant(Tensor::new(vec![b * geo.ctx, v], ctx.into_data())?);
    let gt = g.constant(Tensor::new(vec![b * horizon, v], w.states(idx, geo.half, geo.half + horizon).into_data())?);
    let t = g.tape();
    let pred = t.concat(&gen.states, 1)?;
    let pred = t.reshape(pred, &[b * horizon, v])?;
    let (hist, pred, gt) = if cfg.mmd_enabled {
        let n = (b * geo.ctx).min(b * horizon).min(cfg.mmd_max_points);
        let rh = subsample(rng, b * geo.ctx, n);
        // Forecast and truth share indices so the subsample itself adds no mismatch.
        let rp = subsample(rng, b * horizon, n);
        (pick_rows(t, hist, &rh, v)?, pick_rows(t, pred, &rp, v)?, pick_rows(t, gt, &rp, v)?)
    } else {
        (hist, pred, gt)
    };
    student_objective(t, &truth, &gen.patches, hist, pred, gt, cfg)
}

fn validate(model: &Model, w: &Windows, geo: Geometry, cfg: &TrainConfig) -> Result<Option<f64>> {
    if w.is_empty() {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg, Stage::Student).wrapping_add(1));
    let all: Vec<usize> = (0..w.count).collect();
    let mut sum = 0.0;
    for idx in all.chunks(cfg.batch_size) {
        let mut g = Graph::frozen(model);
        match student_loss(&mut g, w, idx, geo, cfg, &mut rng) {
            Ok((_, r)) => sum += r.total * idx.len() as f64,
            Err(Error::RolloutDiverged { .. }) => return Ok(Some(f64::INFINITY)),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(sum / w.count as f64))
}

/// Student-forcing stage: roll out from the first half of each window and
/// backpropagate through the whole rollout. Returns `None` when skipped
/// (disabled, or the window-head variant, which already emits whole windows).
pub fn train_student_forcing(model: &mut Model, data: &DatasetSplit, cfg: &TrainConfig) -> Result<Option<StageLog>> {
    cfg.validate()?;
    if !cfg.sf_enabled {
        return Ok(None);
    }
    if model.config.encoder_oriented {
        log::info!("window-head model: student forcing skipped");
        return Ok(None);
    }
    let train = Windows::new(model, &data.sf_train)?;
    let val = Windows::new(model, &data.sf_val)?;
    if train.is_empty() {
        return Err(Error::DatasetTooShort {
            required: 1,
            actual: 0,
        });
    }
    let geo = geometry(model, train.len, cfg)?;
    let plan = StagePlan {
        stage: Stage::Student,
        lr: cfg.sf_lr,
        epochs: cfg.sf_epochs,
        max_steps: cfg.sf_max_steps,
        n_train: train.count,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg, Stage::Student).wrapping_add(2));
    let log = run_stage(
        model,
        cfg,
        plan,
        |m, idx| {
            let mut g = Graph::new(m);
            let (loss, report) = student_loss(&mut g, &train, idx, geo, cfg, &mut rng)?;
            let grads = g.sess.tape.backward(loss)?;
            Ok((g.sess.param_grads(&grads), report))
        },
        |m| validate(m, &val, geo, cfg),
    )?;
    Ok(Some(log))
}
