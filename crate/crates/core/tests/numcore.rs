mod common;

use chaoscast::numcore::{gradcheck, Adam, AdamConfig, ParamStore, Session, Tape, Tensor, Var, GATHER_PAD};
use chaoscast::Result;
use common::SplitMix;
use proptest::prelude::*;

const H: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn tensor(rng: &mut SplitMix, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.range(lo, hi)).collect()).unwrap()
}

fn dims(rng: &mut SplitMix, k: usize) -> Vec<usize> {
    (0..k).map(|_| 1 + (rng.uniform() * 4.0) as usize).collect()
}

fn assert_grad<F>(inputs: &[Tensor], seed: u64, f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let r = gradcheck::check(inputs, H, seed, f).unwrap();
    assert!(r.max_rel_error < TOL, "relative error {}", r.max_rel_error);
}

/// Random shape pair that broadcasts: `b` drops leading axes and sets some to 1.
fn broadcast_pair(rng: &mut SplitMix) -> (Vec<usize>, Vec<usize>) {
    let rank = 1 + (rng.uniform() * 3.0) as usize;
    let a = dims(rng, rank);
    let keep = (rng.uniform() * (a.len() + 1) as f64) as usize;
    let b = a[a.len() - keep.min(a.len())..]
        .iter()
        .map(|&d| if rng.uniform() < 0.4 { 1 } else { d })
        .collect();
    if rng.uniform() < 0.5 {
        (a, b)
    } else {
        (b, a)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grad_add_sub_mul(seed in any::<u64>()) {
        let mut rng = SplitMix(seed);
        let (sa, sb) = broadcast_pair(&mut rng);
        let xs = [tensor(&mut rng, &sa, -2.0, 2.0), tensor(&mut rng, &sb, -2.0, 2.0)];
        assert_grad(&xs, seed, |t, v| t.add(v[0], v[1]));
        assert_grad(&xs, seed, |t, v| t.sub(v[0], v[1]));
        assert_grad(&xs, seed, |t, v| t.mul(v[0], v[1]));
    }

    #[test]
    fn grad_matmul(seed in any::<u64>()) {
        let mut rng = SplitMix(seed);
        let d = dims(&mut rng, 3);
        let xs = [tensor(&mut rng, &[d[0], d[1]], -2.0, 2.0), tensor(&mut rng, &[d[1], d[2]], -2.0, 2.0)];
        assert_grad(&xs, seed, |t, v| t.matmul(v[0], v[1]));
    }

    #[test]
    fn grad_unary(seed in any::<u64>()) {
        let mut rng = SplitMix(seed);
        let s = dims(&mut rng, 2);
        let any = [tensor(&mut rng, &s, -3.0, 3.0)];
        let pos = [tensor(&mut rng, &s, 0.3, 3.0)];
        assert_grad(&any, seed, |t, v| t.exp(v[0]));
        assert_grad(&any, seed, |t, v| t.softplus(v[0]));
        assert_grad(&any, seed, |t, v| t.silu(v[0]));
        assert_grad(&any, seed, |t, v| t.square(v[0]));
        assert_grad(&any, seed, |t, v| t.scale(v[0], -1.7));
        assert_grad(&any, seed, |t, v| t.add_scalar(v[0], 0.4));
        assert_grad(&any, seed, |t, v| t.neg(v[0]));
        assert_grad(&pos, seed, |t, v| t.ln(v[0]));
        assert_grad(&pos, seed, |t, v| t.sqrt(v[0]));
        assert_grad(&pos, seed, |t, v| t.recip(v[0]));
    }

    #[test]
    fn grad_reductions(seed in any::<u64>()) {
        let mut rng = SplitMix(seed);
        let s = dims(&mut rng, 3);
        let xs = [tensor(&mut rng, &s, -2.0, 2.0)];
        let axis = (rng.uniform() * 3.0) as usize % 3;
        assert_grad(&xs, seed, |t, v| t.sum(v[0]));
        assert_grad(&xs, seed, |t, v| t.mean(v[0]));
        assert_grad(&xs, seed, |t, v| t.sum_axis(v[0], axis));
        // A single-column norm is sign(x) with a ~eps gradient; relative error is meaningless there.
        let wide = [tensor(&mut rng, &[s[0], s[1] + 1], -2.0, 2.0)];
        assert_grad(&wide, seed, |t, v| t.rms_norm(v[0], 1e-6));
    }

    #[test]
    fn grad_shape_ops(seed in any::<u64>()) {
        let mut rng = SplitMix(seed);
        let s = dims(&mut rng, 2);
        let axis = (rng.uniform() * 2.0) as usize % 2;
        let mut other = s.clone();
        other[axis] = 1 + (rng.uniform() * 3.0) as usize;
        let xs = [tensor(&mut rng, &s, -2.0, 2.0), tensor(&mut rng, &other, -2.0, 2.0)];
        assert_grad(&xs, seed, |t, v| t.concat(&[v[0], v[1], v[0]], axis));
        let end = 1 + (rng.uniform() * s[axis] as f64) as usize % s[axis];
        assert_grad(&xs[..1], seed, |t, v| t.slice(v[0], axis, end - 1, end));
        assert_grad(&xs[..1], seed, |t, v| t.slice(v[0], axis, 0, end));
        assert_grad(&xs[..1], seed, |t, v| t.transpose(v[0]));
        assert_grad(&xs[..1], seed, |t, v| t.reshape(v[0], &[s[0] * s[1]]));
        let row = [tensor(&mut rng, &[1, s[1]], -2.0, 2.0)];
        assert_grad(&row, seed, |t, v| t.broadcast_to(v[0], &[3, s[1]]));
    }

    #[test]
    fn grad_gather_and_distances(seed in any::<u64>()) {
        let mut rng = SplitMix(seed);
        let s = dims(&mut rng, 3);
        let x = tensor(&mut rng, &[s[0], s[2]], -2.0, 2.0);
        let y = tensor(&mut rng, &[s[1], s[2]], -2.0, 2.0);
        assert_grad(&[x.clone(), y], seed, |t, v| t.pairwise_sq_dist(v[0], v[1]));
        // Repeated and padded indices both appear.
        let n = x.len();
        let index: Vec<usize> = (0..7)
            .map(|_| if rng.uniform() < 0.2 { GATHER_PAD } else { (rng.uniform() * n as f64) as usize % n })
            .collect();
        assert_grad(&[x], seed, move |t, v| t.gather(v[0], index.clone(), &[7]));
    }
}

#[test]
fn forward_values_match_hand_results() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let b = t.constant(Tensor::new(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap());
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    let row = t.constant(Tensor::new(vec![3], vec![10.0, 20.0, 30.0]).unwrap());
    let s = t.add(a, row).unwrap();
    assert_eq!(t.value(s).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
    let col = t.sum_axis(a, 1).unwrap();
    assert_eq!(t.value(col).data(), &[6.0, 15.0]);
    let tr = t.transpose(a).unwrap();
    assert_eq!(t.value(tr).data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    let d = t.pairwise_sq_dist(a, a).unwrap();
    assert_eq!(t.value(d).data(), &[0.0, 27.0, 27.0, 0.0]);
    let g = t.gather(a, vec![5, GATHER_PAD, 0], &[3]).unwrap();
    assert_eq!(t.value(g).data(), &[6.0, 0.0, 1.0]);
}

#[test]
fn constants_and_unused_parameters_get_no_gradient() {
    let mut t = Tape::new();
    let p = t.parameter(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let unused = t.parameter(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
    let c = t.constant(Tensor::new(vec![2], vec![5.0, 6.0]).unwrap());
    let y = t.mul(p, c).unwrap();
    let loss = t.sum(y).unwrap();
    assert!(!t.requires_grad(c));
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(p).unwrap().data(), &[5.0, 6.0]);
    assert!(g.get(c).is_none());
    assert!(g.get(unused).is_none());
    assert_eq!(g.get_or_zero(unused).data(), &[0.0, 0.0]);

    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::full(&[2], 1.0));
    let frozen = Session::frozen(&store);
    assert!(!frozen.tape.requires_grad(frozen.param(id)));
}

#[test]
fn two_layer_network_gradients() {
    let mut rng = SplitMix(42);
    let inputs = [
        tensor(&mut rng, &[5, 4], -1.0, 1.0),
        tensor(&mut rng, &[4, 6], -1.0, 1.0),
        tensor(&mut rng, &[6], -0.5, 0.5),
        tensor(&mut rng, &[6, 3], -1.0, 1.0),
        tensor(&mut rng, &[5, 3], -1.0, 1.0),
    ];
    assert_grad(&inputs, 43, |t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.add(h, v[2])?;
        let h = t.silu(h)?;
        let h = t.rms_norm(h, 1e-6)?;
        let o = t.matmul(h, v[3])?;
        let e = t.sub(o, v[4])?;
        let e = t.square(e)?;
        t.mean(e)
    });
}

#[test]
fn adam_descends_a_quadratic() {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::new(vec![2], vec![3.0, -2.0]).unwrap());
    let mut opt = Adam::new(
        AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        },
        &store,
    );
    for _ in 0..500 {
        let mut s = Session::new(&store);
        let x = s.param(id);
        let sq = s.tape.square(x).unwrap();
        let loss = s.tape.sum(sq).unwrap();
        let g = s.tape.backward(loss).unwrap();
        let grads = s.param_grads(&g);
        opt.step(&mut store, &grads);
    }
    assert!(store.get(id).data().iter().all(|x| x.abs() < 1e-2));
}
