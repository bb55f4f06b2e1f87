//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates forward values; it never reads the
//! tape's backward pass when computing the numerical estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{Tape, Tensor, Var};

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, maximised over inputs.
    pub max_rel_error: f64,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

/// Compares analytic gradients of `sum(w ⊙ f(inputs))` against central
/// differences with step `h`, where `w` is a fixed random projection.
pub fn check<F>(inputs: &[Tensor], h: f64, seed: u64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.parameter(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let out_shape = tape.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_out: usize = out_shape.iter().product();
    let weights = Tensor::new(
        out_shape,
        (0..n_out).map(|_| rng.random_range(0.5..1.5)).collect(),
    )?;
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let loss = tape.sum(prod)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zero(v)).collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.value(o)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum())
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for (j, gj) in g.iter_mut().enumerate() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x0 - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x0;
            *gj = (up - down) / (2.0 * h);
        }
        numeric.push(Tensor::new(inputs[i].shape().to_vec(), g)?);
    }

    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a.data(), n.data()))
        .fold(0.0, f64::max);
    Ok(GradCheck {
        max_rel_error,
        analytic,
        numeric,
    })
}

/// Norm-wise relative error; zero when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}
