use std::sync::Arc;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specmatch::autodiff::{grad_check, Mat, RowMask, Tape, Var};
use specmatch::Error;

fn random(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn softmax_of_constant_row() {
    let mut t = Tape::new();
    let x = t.leaf(Mat::zeros(1, 3)).unwrap();
    let y = t.softmax_rows(x).unwrap();
    for v in t.value(y).iter() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = t.sum(y).unwrap();
    t.backward(s).unwrap();
    assert!(t.grad(x).unwrap().amax() < 1e-15);
}

#[test]
fn logsumexp_does_not_overflow() {
    let mut t = Tape::new();
    let x = t.leaf(Mat::from_row_slice(1, 2, &[1000.0, 1001.0])).unwrap();
    let y = t.logsumexp_rows_masked(x, &RowMask::none(1, 2)).unwrap();
    let expected = 1001.0 + (1.0 + (-1.0f64).exp()).ln();
    assert!((t.scalar(y) - expected).abs() < 1e-12);
    assert!((t.scalar(y) - 1001.3132617).abs() < 1e-7);
}

#[test]
fn logsumexp_respects_mask() {
    let mut t = Tape::new();
    let x = t.leaf(Mat::from_row_slice(2, 3, &[5.0, 1.0, 2.0, 0.0, 0.0, 9.0])).unwrap();
    let mask = RowMask::from_row_indices(2, 3, &[vec![0], vec![2]]);
    let y = t.logsumexp_rows_masked(x, &mask).unwrap();
    assert!((t.value(y)[(0, 0)] - (1f64.exp() + 2f64.exp()).ln()).abs() < 1e-14);
    assert!((t.value(y)[(1, 0)] - 2f64.ln()).abs() < 1e-14);
    let full = RowMask::from_row_indices(1, 2, &[vec![0, 1]]);
    let z = t.constant(Mat::zeros(1, 2)).unwrap();
    assert!(t.logsumexp_rows_masked(z, &full).is_err());
}

#[test]
fn frobenius_value_and_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
    let f = t.frobenius_sq(x).unwrap();
    assert_eq!(t.scalar(f), 30.0);
    t.backward(f).unwrap();
    assert_eq!(t.grad(x).unwrap(), &Mat::from_row_slice(2, 2, &[2.0, 4.0, 6.0, 8.0]));
}

#[test]
fn sum_gradient_is_ones() {
    let mut t = Tape::new();
    let x = t.leaf(random(3, 5, 1)).unwrap();
    let s = t.sum(x).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &Mat::from_element(3, 5, 1.0));
}

#[test]
fn matmul_const_gradient_matches_matrix_calculus() {
    let xv = random(4, 3, 2);
    let k = Arc::new(random(3, 5, 3));
    let mut t = Tape::new();
    let x = t.leaf(xv.clone()).unwrap();
    let y = t.right_mul_const(x, k.clone()).unwrap();
    let f = t.frobenius_sq(y).unwrap();
    t.backward(f).unwrap();
    let analytic = &xv * &*k * k.transpose() * 2.0;
    assert!((t.grad(x).unwrap() - analytic).amax() <= 1e-10);
}

#[test]
fn non_scalar_root_rejected() {
    let mut t = Tape::new();
    let x = t.leaf(random(2, 2, 4)).unwrap();
    assert!(matches!(t.backward(x), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn shape_mismatch_reports_op() {
    let mut t = Tape::new();
    let a = t.leaf(random(2, 3, 5)).unwrap();
    let b = t.leaf(random(2, 3, 6)).unwrap();
    match t.matmul(a, b) {
        Err(Error::ShapeMismatch { op, lhs, rhs }) => {
            assert_eq!(op, "matmul");
            assert_eq!((lhs, rhs), ((2, 3), (2, 3)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_finite_values_raise() {
    let mut t = Tape::new();
    let x = t.leaf(Mat::from_element(1, 1, 800.0)).unwrap();
    assert!(matches!(t.exp(x), Err(Error::NonFinite { .. })));
    assert!(t.leaf(Mat::from_element(1, 1, f64::NAN)).is_err());
}

#[test]
fn repeated_backward_accumulates() {
    let mut t = Tape::new();
    let x = t.leaf(random(2, 2, 7)).unwrap();
    let s = t.sum(x).unwrap();
    t.backward(s).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &Mat::from_element(2, 2, 2.0));
    t.zero_grads();
    assert!(t.grad(x).is_none());
}

#[test]
fn shared_subexpression_visited_once() {
    // f = sum(x * x) through one node used twice
    let mut t = Tape::new();
    let xv = random(3, 2, 8);
    let x = t.leaf(xv.clone()).unwrap();
    let sq = t.hadamard(x, x).unwrap();
    let f = t.sum(sq).unwrap();
    t.backward(f).unwrap();
    assert!((t.grad(x).unwrap() - xv * 2.0).amax() < 1e-15);
}

#[test]
fn mean_topk_selects_largest_with_low_index_ties() {
    let mut t = Tape::new();
    let x = t.leaf(Mat::from_row_slice(2, 3, &[0.5, 0.5, 0.1, 0.9, 0.1, 0.5])).unwrap();
    let m = t.mean_topk_rows(x, 1).unwrap();
    assert_eq!(t.value(m)[(0, 0)], 0.5);
    assert_eq!(t.value(m)[(1, 0)], 0.9);
    let s = t.sum(m).unwrap();
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
}

type Build = fn(&mut Tape, Var) -> specmatch::Result<Var>;

/// Every op in the set, each reduced to a scalar through a fixed random
/// weighting so that gradients are non-trivial.
fn op_pipelines() -> Vec<(&'static str, Build)> {
    fn weigh(t: &mut Tape, v: Var) -> specmatch::Result<Var> {
        let (r, c) = t.shape(v);
        let w = t.constant(random(r, c, 99))?;
        let p = t.hadamard(v, w)?;
        t.sum(p)
    }
    vec![
        ("matmul", |t, x| {
            let b = t.constant(random(4, 3, 11))?;
            let y = t.matmul(x, b)?;
            weigh(t, y)
        }),
        ("matmul_self", |t, x| {
            let xt = t.transpose(x)?;
            let y = t.matmul(x, xt)?;
            weigh(t, y)
        }),
        ("add_sub", |t, x| {
            let c = t.constant(random(5, 4, 12))?;
            let a = t.add(x, c)?;
            let s = t.sub(a, x)?;
            let s = t.sub(s, x)?;
            weigh(t, s)
        }),
        ("scale", |t, x| {
            let y = t.scale(x, -2.5)?;
            weigh(t, y)
        }),
        ("row_l2_normalize", |t, x| {
            let y = t.row_l2_normalize(x, 1e-12)?;
            weigh(t, y)
        }),
        ("softmax_rows", |t, x| {
            let y = t.softmax_rows(x)?;
            weigh(t, y)
        }),
        ("logsumexp_rows_masked", |t, x| {
            let mask = RowMask::from_row_indices(5, 4, &[vec![0], vec![1, 2], vec![], vec![3], vec![0, 3]]);
            let y = t.logsumexp_rows_masked(x, &mask)?;
            weigh(t, y)
        }),
        ("mean_topk_rows", |t, x| {
            let y = t.mean_topk_rows(x, 2)?;
            weigh(t, y)
        }),
        ("relu", |t, x| {
            let y = t.relu(x)?;
            weigh(t, y)
        }),
        ("softplus", |t, x| {
            let y = t.softplus(x)?;
            weigh(t, y)
        }),
        ("exp", |t, x| {
            let y = t.exp(x)?;
            weigh(t, y)
        }),
        ("frobenius_sq", |t, x| t.frobenius_sq(x)),
        ("gather_rows", |t, x| {
            let y = t.gather_rows(x, &[4, 0, 0, 2, 1])?;
            weigh(t, y)
        }),
        ("scale_cols", |t, x| {
            let v = t.constant(random(1, 4, 13))?;
            let y = t.scale_cols(x, v)?;
            weigh(t, y)
        }),
        ("scale_cols_by_leaf", |t, x| {
            let a = t.constant(random(3, 4, 14))?;
            let row = t.gather_rows(x, &[2])?;
            let y = t.scale_cols(a, row)?;
            weigh(t, y)
        }),
        ("right_mul_const", |t, x| {
            let y = t.right_mul_const(x, Arc::new(random(4, 6, 15)))?;
            weigh(t, y)
        }),
        ("left_mul_const", |t, x| {
            let y = t.left_mul_const(Arc::new(random(3, 5, 16)), x)?;
            weigh(t, y)
        }),
    ]
}

#[test]
fn every_op_passes_finite_differences() {
    let x = random(5, 4, 42);
    for (name, f) in op_pipelines() {
        let err = grad_check(f, &x, 8, 1e-5, 1).unwrap();
        assert!(err <= 1e-6, "{name}: {err:e}");
    }
}

#[test]
fn gradcheck_of_sum_is_exact() {
    let err = grad_check(|t, x| t.sum(x), &random(3, 3, 2), 5, 1e-5, 0).unwrap();
    assert!(err <= 1e-10, "{err:e}");
}

#[test]
fn gradcheck_catches_wrong_backward() {
    // forward is x^2 elementwise, the supplied derivative is x instead of 2x
    let bad = |t: &mut Tape, x: Var| {
        let y = t.custom(
            x,
            |m| m.map(|v| v * v),
            Arc::new(|input: &Mat, _out: &Mat, g: &Mat| g.component_mul(input)),
        )?;
        t.sum(y)
    };
    let err = grad_check(bad, &random(3, 3, 3).add_scalar(2.0), 5, 1e-5, 0).unwrap();
    assert!(err > 1e-2, "{err:e}");
}

#[test]
fn gradients_are_bitwise_deterministic() {
    let run = || {
        let mut t = Tape::new();
        let x = t.leaf(random(6, 5, 77)).unwrap();
        let xt = t.transpose(x).unwrap();
        let s = t.matmul(x, xt).unwrap();
        let p = t.softmax_rows(s).unwrap();
        let f = t.frobenius_sq(p).unwrap();
        t.backward(f).unwrap();
        t.grad(x).unwrap().clone()
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #[test]
    fn backward_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
        let xv = random(4, 3, seed);
        let grad_of = |ca: f64, cb: f64| -> DMatrix<f64> {
            let mut t = Tape::new();
            let x = t.leaf(xv.clone()).unwrap();
            let f = t.softplus(x).unwrap();
            let f = t.sum(f).unwrap();
            let g = t.frobenius_sq(x).unwrap();
            let fa = t.scale(f, ca).unwrap();
            let gb = t.scale(g, cb).unwrap();
            let root = t.add(fa, gb).unwrap();
            t.backward(root).unwrap();
            t.grad(x).unwrap().clone()
        };
        let combined = grad_of(a, b);
        let separate = grad_of(1.0, 0.0) * a + grad_of(0.0, 1.0) * b;
        prop_assert!((combined - separate).amax() <= 1e-12);
    }

    #[test]
    fn exp_sums_stay_finite(scale in 1.0f64..1e4, seed in 0u64..1000) {
        let xv = random(3, 6, seed) * scale;
        let mut t = Tape::new();
        let x = t.leaf(xv).unwrap();
        let l = t.logsumexp_rows_masked(x, &RowMask::none(3, 6)).unwrap();
        let s = t.softmax_rows(x).unwrap();
        let f = t.sum(l).unwrap();
        let g = t.frobenius_sq(s).unwrap();
        let root = t.add(f, g).unwrap();
        prop_assert!(t.backward(root).is_ok());
        prop_assert!(t.grad(x).unwrap().iter().all(|v| v.is_finite()));
    }
}
