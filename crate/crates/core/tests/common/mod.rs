//! Independent reference implementations used as test oracles.
//! Nothing here calls into the library's numerics.
#![allow(dead_code)]

pub type Field = fn(&[f64], &mut [f64]);

pub fn lorenz63(x: &[f64], dx: &mut [f64]) {
    dx[0] = 10.0 * (x[1] - x[0]);
    dx[1] = x[0] * (28.0 - x[2]) - x[1];
    dx[2] = x[0] * x[1] - 8.0 / 3.0 * x[2];
}

pub fn lorenz63_jacobian(x: &[f64]) -> [[f64; 3]; 3] {
    [
        [-10.0, 10.0, 0.0],
        [28.0 - x[2], -1.0, -x[0]],
        [x[1], x[0], -8.0 / 3.0],
    ]
}

pub fn rossler(x: &[f64], dx: &mut [f64]) {
    dx[0] = -x[1] - x[2];
    dx[1] = x[0] + 0.2 * x[1];
    dx[2] = 0.2 + x[2] * (x[0] - 5.7);
}

pub fn rossler_jacobian(x: &[f64]) -> [[f64; 3]; 3] {
    [[0.0, -1.0, -1.0], [1.0, 0.2, 0.0], [x[2], 0.0, x[0] - 5.7]]
}

/// Kutta's 3/8-rule step: a fourth-order scheme with a different tableau from the classical one.
pub fn rk38_step(f: &dyn Fn(&[f64], &mut [f64]), x: &mut [f64], h: f64) {
    let n = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut y = vec![0.0; n];
    f(x, &mut k1);
    for i in 0..n {
        y[i] = x[i] + h * k1[i] / 3.0;
    }
    f(&y, &mut k2);
    for i in 0..n {
        y[i] = x[i] + h * (k2[i] - k1[i] / 3.0);
    }
    f(&y, &mut k3);
    for i in 0..n {
        y[i] = x[i] + h * (k1[i] - k2[i] + k3[i]);
    }
    f(&y, &mut k4);
    for i in 0..n {
        x[i] += h * (k1[i] + 3.0 * k2[i] + 3.0 * k3[i] + k4[i]) / 8.0;
    }
}

pub fn rk38_flow(f: &dyn Fn(&[f64], &mut [f64]), x0: &[f64], t: f64, h: f64) -> Vec<f64> {
    let n = (t / h).round() as usize;
    let h = t / n as f64;
    let mut x = x0.to_vec();
    for _ in 0..n {
        rk38_step(f, &mut x, h);
    }
    x
}

/// Largest Lyapunov exponent from the linearized (variational) flow,
/// co-integrated with the 3/8 rule and renormalized every `renorm` steps.
pub fn variational_mle(
    f: Field,
    jac: fn(&[f64]) -> [[f64; 3]; 3],
    x0: &[f64],
    h: f64,
    steps: usize,
    renorm: usize,
) -> f64 {
    let aug = move |s: &[f64], ds: &mut [f64]| {
        f(&s[..3], &mut ds[..3]);
        let j = jac(&s[..3]);
        for r in 0..3 {
            ds[3 + r] = (0..3).map(|c| j[r][c] * s[3 + c]).sum();
        }
    };
    let mut s = vec![x0[0], x0[1], x0[2], 1.0, 0.0, 0.0];
    let mut acc = 0.0;
    for k in 1..=steps {
        rk38_step(&aug, &mut s, h);
        if k % renorm == 0 {
            let norm = (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]).sqrt();
            acc += norm.ln();
            for v in &mut s[3..] {
                *v /= norm;
            }
        }
    }
    acc / ((steps / renorm * renorm) as f64 * h)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Tiny deterministic generator (SplitMix64) so oracles do not share the library's RNG stack.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Points on the Lorenz63 attractor, one every `every` steps of size `h` after a transient.
pub fn lorenz_attractor_points(n: usize, h: f64, every: usize) -> Vec<Vec<f64>> {
    let mut x = rk38_flow(&lorenz63, &[1.0, 1.0, 1.0], 20.0, h);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..every {
            rk38_step(&lorenz63, &mut x, h);
        }
        out.push(x.clone());
    }
    out
}
pub mod model_oracle;
