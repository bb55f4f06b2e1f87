use super::net::{Graph, StackState, TrunkOut};
use crate::error::{Error, Result};
use crate::numcore::Var;

/// Teacher-forced outputs over one batch of patch sequences.
#[derive(Clone, Debug)]
pub struct TeacherOutputs {
    pub tokens: Vec<Var>,
    pub trunk: Vec<TrunkOut>,
    /// `next[i]` predicts patch `i + 1` from the trunk sum at `i`.
    pub next: Vec<Var>,
    /// `mpp[m][i]` (depth `m + 1`) predicts patch `i + m + 2` from anchor `i`.
    pub mpp: Vec<Vec<Var>>,
}

/// Runs the trunk over ground-truth patches `[B, width]` and, when the model
/// has them, the multi-patch modules on every valid anchor.
pub fn teacher_forward(g: &mut Graph, patches: &[Var]) -> Result<TeacherOutputs> {
    let n = patches.len();
    let depth = g.model.ids.mpp.len();
    if n < 2 {
        return Err(Error::NotEnoughPatches { have: n, need: 2 });
    }
    if depth > 0 && n < depth + 2 {
        return Err(Error::NotEnoughPatches {
            have: n,
            need: depth + 2,
        });
    }
    let tokens = patches.iter().map(|&p| g.embed(p)).collect::<Result<Vec<_>>>()?;
    let mut state = StackState::new(g.model.config.layers);
    let mut mpp_h: Vec<Option<Var>> = vec![None; depth];
    let mut out = TeacherOutputs {
        tokens: tokens.clone(),
        trunk: Vec::with_capacity(n),
        next: Vec::with_capacity(n - 1),
        mpp: vec![Vec::new(); depth],
    };
    for i in 0..n {
        let t = g.trunk(tokens[i], &mut state)?;
        let e = t.e;
        out.trunk.push(t);
        if i + 1 < n {
            out.next.push(g.decode(e)?);
        }
        let mut v = e;
        for m in 1..=depth {
            if i + m + 1 >= n {
                break;
            }
            let (hidden, pred) = g.mpp(m - 1, v, tokens[i + m], &mut mpp_h[m - 1])?;
            out.mpp[m - 1].push(pred);
            v = hidden;
        }
    }
    Ok(out)
}
