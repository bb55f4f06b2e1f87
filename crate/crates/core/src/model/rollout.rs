use super::net::{Graph, Model, StackState};
use crate::dynamics::Trajectory;
use crate::embedding::{flat_index, raw_state_indices};
use crate::error::{Error, Result};
use crate::numcore::{Tensor, Var, GATHER_PAD};

/// Default bound on generated values, in standard deviations.
pub const DEFAULT_ENVELOPE: f64 = 1e3;

/// Everything generated by [`generate`], one entry per block
/// (a patch, or a whole window for the window head).
#[derive(Clone, Debug)]
pub struct Generated {
    /// Decoded patches `[B, width]`; empty for the window head.
    pub patches: Vec<Var>,
    /// Raw standardized states `[B, block_len · V]`.
    pub states: Vec<Var>,
    pub block_len: usize,
}

/// Gather indices of the patch covering `start..start + D` in a batch of
/// row-major histories of `total` steps.
fn history_patch_index(model: &Model, batch: usize, total: usize, start: usize) -> Vec<usize> {
    let (m, tau) = model.delay();
    let (d, v_dim) = (model.patch_size(), model.dim);
    let width = model.patch_width();
    let mut idx = vec![GATHER_PAD; batch * width];
    for b in 0..batch {
        for t in 0..d {
            let step = start + t;
            for v in 0..v_dim {
                for j in 0..m {
                    let back = (m - 1 - j) * tau;
                    if step >= back {
                        idx[b * width + flat_index(t, v, j, v_dim, m)] = (b * total + step - back) * v_dim + v;
                    }
                }
            }
        }
    }
    idx
}

fn check_envelope(g: &Graph, states: Var, offset: usize, envelope: f64) -> Result<()> {
    let t = g.sess.tape.value(states);
    let row = t.shape()[1];
    let v = g.model.dim;
    if let Some(pos) = t.data().iter().position(|x| x.abs() > envelope) {
        return Err(Error::RolloutDiverged {
            step: offset + (pos % row) / v,
        });
    }
    Ok(())
}

/// Autoregressive continuation of `batch` standardized contexts stored as
/// `[B, ctx_len · V]` in `ctx`. The next-patch model needs `ctx_len` to be a
/// multiple of D; the window head reads the last `window_len` steps.
pub fn generate(g: &mut Graph, ctx: &[f64], batch: usize, ctx_len: usize, blocks: usize, envelope: f64) -> Result<Generated> {
    let model = g.model;
    let (d, v_dim) = (model.patch_size(), model.dim);
    let width = model.patch_width();
    if ctx.len() != batch * ctx_len * v_dim || batch == 0 {
        return Err(Error::Shape {
            op: "generate",
            lhs: vec![batch, ctx_len, v_dim],
            rhs: vec![ctx.len()],
        });
    }
    let ctx_var = g.constant(Tensor::new(vec![batch, ctx_len * v_dim], ctx.to_vec())?);
    let mut history: Vec<Var> = vec![ctx_var];
    let mut total = ctx_len;
    let mut out = Generated {
        patches: Vec::new(),
        states: Vec::new(),
        block_len: if model.config.encoder_oriented { model.window_len() } else { d },
    };

    if model.config.encoder_oriented {
        let w = model.window_len();
        if ctx_len < w {
            return Err(Error::NotEnoughSteps {
                have: ctx_len,
                patch_size: w,
            });
        }
        for _ in 0..blocks {
            let hist = g.tape().concat(&history, 1)?;
            let mut state = StackState::new(model.config.layers);
            let mut sums = Vec::with_capacity(model.context_patches);
            for p in 0..model.context_patches {
                let idx = history_patch_index(model, batch, total, total - w + p * d);
                let patch = g.tape().gather(hist, idx, &[batch, width])?;
                let s = g.embed(patch)?;
                sums.push(g.trunk(s, &mut state)?.e);
            }
            let states = g.window_head(&sums)?;
            check_envelope(g, states, total - ctx_len, envelope)?;
            out.states.push(states);
            history.push(states);
            total += w;
        }
        return Ok(out);
    }

    if ctx_len < d || !ctx_len.is_multiple_of(d) {
        return Err(Error::NotEnoughSteps {
            have: ctx_len,
            patch_size: d,
        });
    }
    let mut state = StackState::new(model.config.layers);
    let mut e = None;
    for p in 0..ctx_len / d {
        let idx = history_patch_index(model, batch, total, p * d);
        let patch = g.tape().gather(ctx_var, idx, &[batch, width])?;
        let s = g.embed(patch)?;
        e = Some(g.trunk(s, &mut state)?.e);
    }
    let (m, _) = model.delay();
    let raw_idx: Vec<usize> = (0..batch)
        .flat_map(|b| raw_state_indices(d, v_dim, m).into_iter().map(move |i| b * width + i))
        .collect();
    for k in 0..blocks {
        let pred = g.decode(e.expect("context has at least one patch"))?;
        let states = g.tape().gather(pred, raw_idx.clone(), &[batch, d * v_dim])?;
        check_envelope(g, states, total - ctx_len, envelope)?;
        out.patches.push(pred);
        out.states.push(states);
        history.push(states);
        total += d;
        if k + 1 < blocks {
            let hist = g.tape().concat(&history, 1)?;
            let idx = history_patch_index(model, batch, total, total - d);
            let patch = g.tape().gather(hist, idx, &[batch, width])?;
            let s = g.embed(patch)?;
            e = Some(g.trunk(s, &mut state)?.e);
        }
    }
    Ok(out)
}

/// Steps of `context` actually consumed: all of it, minus the leading
/// remainder that does not fill a patch (or the last window for the window head).
pub fn usable_context(model: &Model, len: usize) -> usize {
    if model.config.encoder_oriented {
        model.window_len().min(len)
    } else {
        len / model.patch_size() * model.patch_size()
    }
}

/// Forecast of `horizon_patches · D` steps following `context`, in original units.
pub fn autoregressive_rollout(model: &Model, context: &Trajectory, horizon_patches: usize, envelope: f64) -> Result<Trajectory> {
    if context.dim() != model.dim {
        return Err(Error::Shape {
            op: "rollout",
            lhs: vec![model.dim],
            rhs: vec![context.dim()],
        });
    }
    if horizon_patches == 0 {
        return Err(Error::InvalidInput("horizon must be ≥ 1 patch".into()));
    }
    let use_len = usable_context(model, context.len());
    let need = if model.config.encoder_oriented { model.window_len() } else { model.patch_size() };
    if use_len < need {
        return Err(Error::NotEnoughSteps {
            have: context.len(),
            patch_size: need,
        });
    }
    let ctx = context.window(context.len() - use_len, context.len())?;
    let z = model.standardizer.transform(&ctx);
    let steps = horizon_patches * model.patch_size();
    let mut g = Graph::frozen(model);
    let block = if model.config.encoder_oriented { model.window_len() } else { model.patch_size() };
    let blocks = steps.div_ceil(block);
    let gen = generate(&mut g, z.states(), 1, use_len, blocks, envelope)?;
    let mut states: Vec<f64> = gen
        .states
        .iter()
        .flat_map(|&v| g.sess.tape.value(v).data().to_vec())
        .collect();
    states.truncate(steps * model.dim);
    model.standardizer.inverse_in_place(&mut states);
    Ok(Trajectory::new(states, model.dim, context.dt())?.with_steps_per_lyapunov_time(context.steps_per_lyapunov_time()))
}
