use proptest::prelude::*;
use tradeopt::autodiff::{AdError, Tape, Tensor, TensorOps, Var};

type Build = fn(&mut Tape, Var, Var) -> Result<Var, AdError>;

/// Scalar function of two inputs built from one elementary op (plus a sum
/// to reduce to a scalar where needed).
fn ops() -> Vec<(&'static str, Build)> {
    vec![
        ("add", |t, a, b| t.add(a, b)),
        ("sub", |t, a, b| t.sub(a, b)),
        ("mul", |t, a, b| t.mul(a, b)),
        ("div", |t, a, b| t.div(a, b)),
        ("neg", |t, a, _| t.neg(a)),
        ("exp", |t, a, _| t.exp(a)),
        ("log", |t, a, _| t.ln(a)),
        ("pow", |t, a, _| t.powf(a, Tensor::scalar(1.7))),
        ("broadcast-sum", |t, a, b| {
            let v = t.broadcast(a, &[3], &[])?;
            let w = t.broadcast(b, &[3], &[])?;
            let p = t.mul(v, w)?;
            t.sum_axis(p, 0)
        }),
        ("matvec", |t, a, b| {
            let m = t.broadcast(a, &[2, 2], &[])?;
            let v = t.broadcast(b, &[2], &[])?;
            let y = t.matvec(m, v)?;
            let y = t.exp(y)?;
            t.sum_axis(y, 0)
        }),
    ]
}

fn eval(f: Build, x: f64, y: f64) -> f64 {
    let mut t = Tape::new();
    let a = t.input(Tensor::scalar(x));
    let b = t.input(Tensor::scalar(y));
    let out = f(&mut t, a, b).unwrap();
    t.value(out).item()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-8)
}

proptest! {
    #[test]
    fn elementary_partials_match_differences(x in 0.5f64..2.0, y in 0.5f64..2.0) {
        let h = 1e-6;
        for (name, f) in ops() {
            let mut t = Tape::new();
            let a = t.input(Tensor::scalar(x));
            let b = t.input(Tensor::scalar(y));
            let out = f(&mut t, a, b).unwrap();
            let g = t.gradient(out, &[a, b]).unwrap();
            let fx = (eval(f, x + h, y) - eval(f, x - h, y)) / (2.0 * h);
            let fy = (eval(f, x, y + h) - eval(f, x, y - h)) / (2.0 * h);
            prop_assert!(rel(g[0].item(), fx) < 1e-6 || (g[0].item() - fx).abs() < 1e-9, "{name} x: {} vs {fx}", g[0].item());
            prop_assert!(rel(g[1].item(), fy) < 1e-6 || (g[1].item() - fy).abs() < 1e-9, "{name} y: {} vs {fy}", g[1].item());
        }
    }

    #[test]
    fn gradient_is_linear(x in 0.5f64..2.0, y in 0.5f64..2.0, ca in -3.0f64..3.0, cb in -3.0f64..3.0) {
        let mut t = Tape::new();
        let a = t.input(Tensor::scalar(x));
        let b = t.input(Tensor::scalar(y));
        let p = t.mul(a, b).unwrap();
        let f = t.exp(p).unwrap();
        let q = t.div(a, b).unwrap();
        let g = t.ln(q).unwrap();
        let fa = t.scale(f, Tensor::scalar(ca)).unwrap();
        let gb = t.scale(g, Tensor::scalar(cb)).unwrap();
        let combo = t.add(fa, gb).unwrap();
        let gc = t.gradient(combo, &[a, b]).unwrap();
        let gf = t.gradient(f, &[a, b]).unwrap();
        let gg = t.gradient(g, &[a, b]).unwrap();
        for k in 0..2 {
            let want = ca * gf[k].item() + cb * gg[k].item();
            prop_assert!((gc[k].item() - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn vjp_rows_match_jacobian(xs in prop::collection::vec(0.5f64..2.0, 3)) {
        // five outputs of three inputs
        let build = |t: &mut Tape, x: Var| -> Var {
            let e = t.exp(x).unwrap();
            let l = t.ln(x).unwrap();
            let m = t.mul(e, l).unwrap();
            let s = t.sum_axis(m, 0).unwrap();
            let s = t.broadcast(s, &[2], &[]).unwrap();
            let p = t.powf(x, Tensor::vector(vec![2.0, 0.5, 1.5])).unwrap();
            t.concat(&[p, s]).unwrap()
        };
        let mut t = Tape::new();
        let x = t.input(Tensor::vector(xs.clone()));
        let out = build(&mut t, x);
        prop_assert_eq!(t.value(out).len(), 5);
        let h = 1e-6;
        for row in 0..5 {
            let mut seed = vec![0.0; 5];
            seed[row] = 1.0;
            let g = t.vjp(out, &seed, &[x]).unwrap();
            for col in 0..3 {
                let probe = |d: f64| {
                    let mut t = Tape::new();
                    let mut v = xs.clone();
                    v[col] += d;
                    let x = t.input(Tensor::vector(v));
                    let out = build(&mut t, x);
                    t.value(out).data()[row]
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let ad = g[0].data()[col];
                prop_assert!(rel(ad, fd) < 1e-6 || (ad - fd).abs() < 1e-9, "row {row} col {col}: {ad} vs {fd}");
            }
        }
    }

    #[test]
    fn backward_visits_every_node_once(x in 0.5f64..2.0, depth in 1usize..40) {
        let mut t = Tape::new();
        let a = t.input(Tensor::scalar(x));
        let mut v = a;
        for k in 0..depth {
            v = if k % 2 == 0 { t.exp(v).unwrap() } else { t.ln(v).unwrap() };
        }
        let adj = t.backward(v, &[1.0]).unwrap();
        prop_assert_eq!(adj.visits, t.len());
    }
}

#[test]
fn toy_example_matches_hand_derivation_and_differences() {
    let f = |t: &mut Tape, x1: Var, x2: Var| -> Var {
        let ratio = t.div(x1, x2).unwrap();
        let e = t.exp(x2).unwrap();
        let sq = t.mul(x1, x1).unwrap();
        let left = t.add(sq, ratio).unwrap();
        let left = t.sub(left, e).unwrap();
        let right = t.sub(ratio, e).unwrap();
        t.mul(left, right).unwrap()
    };
    let run = |a: f64, b: f64| {
        let mut t = Tape::new();
        let x1 = t.input(Tensor::scalar(a));
        let x2 = t.input(Tensor::scalar(b));
        let y = f(&mut t, x1, x2);
        let g = t.gradient(y, &[x1, x2]).unwrap();
        (t.value(y).item(), g[0].item(), g[1].item())
    };
    let (y, g1, g2) = run(2.0, 1.0);
    // hand evaluation: u = 4 + 2 - e, v = 2 - e
    let e = 1f64.exp();
    let (u, v) = (6.0 - e, 2.0 - e);
    assert!(rel(y, u * v) < 1e-15);
    let hand1 = (2.0 * 2.0 + 1.0) * v + u * 1.0;
    let hand2 = (-2.0 - e) * v + u * (-2.0 - e);
    assert!(rel(g1, hand1) < 1e-12 && rel(g2, hand2) < 1e-12);
    assert!(rel(g1, -0.309691) < 1e-6, "{g1}");
    assert!(rel(g2, -12.09502) < 1e-6, "{g2}");
    let h = 1e-6;
    let fd1 = (run(2.0 + h, 1.0).0 - run(2.0 - h, 1.0).0) / (2.0 * h);
    let fd2 = (run(2.0, 1.0 + h).0 - run(2.0, 1.0 - h).0) / (2.0 * h);
    assert!(rel(g1, fd1) < 1e-6 && rel(g2, fd2) < 1e-6);
}
