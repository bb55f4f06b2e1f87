//! Plain-loop evaluation of the forecaster from its named parameter tensors, batch size 1.
#![allow(dead_code)]

use chaoscast::model::Model;

pub fn param(model: &Model, name: &str) -> Vec<f64> {
    let id = model.params.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
    model.params.get(id).data().to_vec()
}

/// `x · W (+ b)` with `W: [k, n]` row-major.
pub fn affine(x: &[f64], w: &[f64], b: Option<&[f64]>, n: usize) -> Vec<f64> {
    let k = x.len();
    assert_eq!(w.len(), k * n);
    (0..n)
        .map(|j| (0..k).map(|i| x[i] * w[i * n + j]).sum::<f64>() + b.map_or(0.0, |b| b[j]))
        .collect()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Recurrent state of one layer: `h[head][p][n]` flattened.
pub struct SsmOracle<'a> {
    model: &'a Model,
    prefix: String,
    pub h: Vec<f64>,
}

impl<'a> SsmOracle<'a> {
    pub fn new(model: &'a Model, prefix: &str) -> Self {
        let c = &model.config;
        Self {
            model,
            prefix: prefix.to_string(),
            h: vec![0.0; c.heads * c.head_dim() * c.state_size],
        }
    }

    pub fn step(&mut self, x: &[f64]) -> Vec<f64> {
        let c = &self.model.config;
        let (heads, p, n, d) = (c.heads, c.head_dim(), c.state_size, c.d);
        let g = |s: &str| param(self.model, &format!("{}.{s}", self.prefix));
        let normed;
        let x = if c.pre_norm {
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + 1e-6).sqrt();
            normed = x.iter().map(|v| v / rms).collect::<Vec<_>>();
            &normed[..]
        } else {
            x
        };
        let u: Vec<f64> = affine(x, &g("w_in"), Some(&g("b_in")), heads * p).into_iter().map(silu).collect();
        let dt: Vec<f64> = affine(x, &g("w_dt"), Some(&g("b_dt")), heads).into_iter().map(softplus).collect();
        let a: Vec<f64> = g("a_raw").iter().map(|&r| -softplus(r)).collect();
        let bt = affine(x, &g("w_b"), None, n);
        let ct = affine(x, &g("w_c"), None, n);
        let mut y = vec![0.0; heads * p];
        for hd in 0..heads {
            let abar = (dt[hd] * a[hd]).exp();
            let coef = if c.exact_zoh { (abar - 1.0) / a[hd] } else { dt[hd] };
            for q in 0..p {
                for s in 0..n {
                    let k = (hd * p + q) * n + s;
                    self.h[k] = abar * self.h[k] + coef * u[hd * p + q] * bt[s];
                    y[hd * p + q] += self.h[k] * ct[s];
                }
            }
        }
        affine(&y, &g("w_out"), None, d)
    }
}

pub struct StackOracle<'a> {
    model: &'a Model,
    layers: Vec<SsmOracle<'a>>,
}

impl<'a> StackOracle<'a> {
    pub fn new(model: &'a Model) -> Self {
        let layers = (0..model.config.layers)
            .map(|l| SsmOracle::new(model, &format!("layer{l}.ssm")))
            .collect();
        Self { model, layers }
    }

    /// Per-layer contributions and their sum for one token.
    pub fn step(&mut self, s: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.model.config.d;
        let l_count = self.layers.len();
        let mut stream = s.to_vec();
        let mut contrib = Vec::new();
        for l in 0..l_count {
            let y = self.layers[l].step(&stream);
            let dec = |k: &str| param(self.model, &format!("layer{l}.dec_e.{k}"));
            if self.model.config.rs_enabled {
                let e = affine(&y, &dec("w"), Some(&dec("b")), d);
                stream = stream.iter().zip(&e).map(|(a, b)| a - b).collect();
                contrib.push(e);
            } else if l + 1 == l_count {
                contrib.push(affine(&y, &dec("w"), Some(&dec("b")), d));
            } else {
                stream = y;
            }
        }
        let mut sum = vec![0.0; d];
        for c in &contrib {
            for (s, v) in sum.iter_mut().zip(c) {
                *s += v;
            }
        }
        (contrib, sum)
    }
}

pub fn embed(model: &Model, patch: &[f64]) -> Vec<f64> {
    affine(patch, &param(model, "embed.w"), Some(&param(model, "embed.b")), model.config.d)
}

pub fn decode(model: &Model, e: &[f64]) -> Vec<f64> {
    affine(e, &param(model, "dec_p.w"), Some(&param(model, "dec_p.b")), model.patch_width())
}

/// Next-patch predictions and per-depth multi-patch predictions for one sequence.
pub fn teacher_oracle(model: &Model, patches: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let n = patches.len();
    let depth = model.config.mpp_depth;
    let d = model.config.d;
    let tokens: Vec<Vec<f64>> = patches.iter().map(|p| embed(model, p)).collect();
    let mut stack = StackOracle::new(model);
    let mut sums = Vec::new();
    for t in &tokens {
        sums.push(stack.step(t).1);
    }
    let next = sums[..n - 1].iter().map(|e| decode(model, e)).collect();
    let mut mpp = Vec::new();
    let mut prev: Vec<Vec<f64>> = sums.clone();
    for m in 1..=depth {
        let mut ssm = SsmOracle::new(model, &format!("mpp{}.ssm", m - 1));
        let gain = param(model, &format!("mpp{}.gain", m - 1));
        let mut preds = Vec::new();
        let mut hidden = Vec::new();
        for i in 0..n.saturating_sub(m + 1) {
            let v = &prev[i];
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / d as f64 + 1e-6).sqrt();
            let mut fused: Vec<f64> = v.iter().zip(&gain).map(|(x, g)| x / rms * g).collect();
            fused.extend_from_slice(&tokens[i + m]);
            let z = affine(
                &fused,
                &param(model, &format!("mpp{}.psi.w", m - 1)),
                Some(&param(model, &format!("mpp{}.psi.b", m - 1))),
                d,
            );
            let h = ssm.step(&z);
            preds.push(decode(model, &h));
            hidden.push(h);
        }
        mpp.push(preds);
        prev = hidden;
    }
    (next, mpp)
}
