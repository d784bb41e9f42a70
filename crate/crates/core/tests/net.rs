use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specmatch::autodiff::{grad_check, Mat, Tape, Var};
use specmatch::net::{compute_features, diffuse, forward, init_params, BoundParams, CheckpointMeta, NetConfig, NetParams};
use specmatch::shapes::{permute_vertices, rigid_motion, uv_sphere};
use specmatch::spectral::{HksScaling, compute_spectra, hks, EigOptions};
use specmatch::{Error, Mesh, SpectralOperators};

fn lumpy(rings: usize, segments: usize, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = uv_sphere(rings, segments);
    let verts = base
        .vertices()
        .iter()
        .map(|p| {
            let n: f64 = rng.random_range(-0.08..0.08);
            [p[0] * (1.0 + n), p[1] * (1.1 + n), p[2] * (1.3 + n)]
        })
        .collect();
    Mesh::new("lumpy", verts, base.triangles().to_vec()).unwrap()
}

fn spectra(m: &Mesh, k: usize) -> SpectralOperators {
    compute_spectra(m, k, &EigOptions::default()).unwrap()
}

fn small_config() -> NetConfig {
    NetConfig {
        in_dim: 6,
        width: 8,
        blocks: 2,
        ..NetConfig::default()
    }
}

fn diffuse_values(f: &Mat, ops: &SpectralOperators, t: &[f64]) -> Mat {
    let mut tape = Tape::new();
    let x = tape.constant(f.clone()).unwrap();
    let tv = tape.constant(Mat::from_row_slice(1, t.len(), t)).unwrap();
    let d = diffuse(&mut tape, x, ops, tv).unwrap();
    tape.value(d).clone()
}

#[test]
fn zero_time_diffusion_is_projection() {
    let m = lumpy(5, 8, 1);
    let ops = spectra(&m, 12);
    let coeffs = DMatrix::from_fn(12, 3, |i, j| ((i + 2 * j) as f64).sin());
    let f = &*ops.phi * coeffs;
    let out = diffuse_values(&f, &ops, &[0.0; 3]);
    assert!((out - f).amax() < 1e-8);
}

#[test]
fn long_time_diffusion_reaches_the_mean() {
    let m = lumpy(5, 8, 2);
    let ops = spectra(&m, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = Mat::from_fn(m.n_vertices(), 2, |_, _| rng.random_range(-1.0..1.0));
    let t = 1e6 / ops.lambda[1];
    let out = diffuse_values(&f, &ops, &[t, t]);
    for j in 0..2 {
        let col = out.column(j);
        let mean = col.sum() / col.len() as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        let var_in = f.column(j).iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        assert!(var / var_in <= 1e-6);
        // weighted mean is preserved
        let area = ops.mass.sum();
        let weighted: f64 = f.column(j).iter().zip(ops.mass.iter()).map(|(a, b)| a * b).sum::<f64>() / area;
        assert!((mean - weighted).abs() < 1e-9);
    }
}

#[test]
fn diffusion_matches_dense_oracle() {
    let m = lumpy(4, 7, 4);
    let ops = spectra(&m, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = Mat::from_fn(m.n_vertices(), 3, |_, _| rng.random_range(-1.0..1.0));
    let times = [0.01, 0.1, 0.5];
    let out = diffuse_values(&f, &ops, &times);
    let a = DMatrix::from_diagonal(&ops.mass);
    for (j, &t) in times.iter().enumerate() {
        let decay = DMatrix::from_diagonal(&ops.lambda.map(|l| (-l * t).exp()));
        let kernel = &*ops.phi * decay * ops.phi.transpose() * &a;
        let col = kernel * f.column(j);
        assert!((out.column(j) - col).amax() < 1e-10);
    }
}

#[test]
fn diffuse_rejects_wrong_time_count() {
    let m = lumpy(4, 7, 4);
    let ops = spectra(&m, 6);
    let mut tape = Tape::new();
    let x = tape.constant(Mat::zeros(m.n_vertices(), 3)).unwrap();
    let t = tape.constant(Mat::zeros(1, 2)).unwrap();
    assert!(matches!(diffuse(&mut tape, x, &ops, t), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn hand_fixture_one_block() {
    let m = lumpy(4, 7, 6);
    let ops = spectra(&m, 8);
    let cfg = NetConfig {
        in_dim: 3,
        width: 3,
        blocks: 1,
        ..NetConfig::default()
    };
    let mut p = init_params(&cfg, 0).unwrap();
    for (name, t) in p.tensors.iter_mut() {
        *t = if name.ends_with("weight") {
            Mat::identity(3, 3)
        } else {
            Mat::zeros(t.nrows(), t.ncols())
        };
    }
    let times = [0.05, 0.2, 1.0];
    let raw: Vec<f64> = times.iter().map(|t: &f64| t.exp_m1().ln()).collect();
    *p.get_mut("block0.time").unwrap() = Mat::from_row_slice(1, 3, &raw);
    let input = hks(&ops, 3, HksScaling::UnitL2).unwrap();
    let out = compute_features(&p, &input, &ops).unwrap();
    let expected = &input + diffuse_values(&input, &ops, &times).map(|x| x.max(0.0));
    assert!((out - expected).amax() < 1e-12);
}

#[test]
fn features_are_permutation_equivariant() {
    let m = lumpy(5, 8, 7);
    let mut perm: Vec<usize> = (0..m.n_vertices()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let pm = permute_vertices(&m, &perm).unwrap();
    let ops = spectra(&m, 15);
    // permuted cached spectra: row i of the permuted basis is row perm[i]
    let phi = Mat::from_fn(pm.n_vertices(), 15, |r, c| ops.phi[(perm[r], c)]);
    let mass = nalgebra::DVector::from_fn(pm.n_vertices(), |r, _| ops.mass[perm[r]]);
    let pops = SpectralOperators::new(phi, ops.lambda.clone(), mass).unwrap();
    let cfg = small_config();
    let params = init_params(&cfg, 9).unwrap();
    let input = hks(&ops, 6, HksScaling::UnitL2).unwrap();
    let pinput = Mat::from_fn(pm.n_vertices(), 6, |r, c| input[(perm[r], c)]);
    let f = compute_features(&params, &input, &ops).unwrap();
    let pf = compute_features(&params, &pinput, &pops).unwrap();
    let expected = Mat::from_fn(pm.n_vertices(), 8, |r, c| f[(perm[r], c)]);
    assert!((pf - expected).amax() < 1e-12);
}

#[test]
fn features_are_rigid_motion_invariant() {
    let m = lumpy(6, 9, 10);
    let moved = rigid_motion(&m, [1.0, 2.0, -0.5], 0.9, [3.0, -1.0, 2.0]).unwrap();
    let cfg = small_config();
    let params = init_params(&cfg, 11).unwrap();
    let run = |mesh: &Mesh| {
        let ops = spectra(mesh, 20);
        let input = hks(&ops, 6, HksScaling::UnitL2).unwrap();
        compute_features(&params, &input, &ops).unwrap()
    };
    let (a, b) = (run(&m), run(&moved));
    let rel = (&a - &b).amax() / a.amax();
    assert!(rel <= 1e-6, "{rel}");
}

fn bound_with_leaf(params: &NetParams, tape: &mut Tape, name: &str, leaf: Var) -> BoundParams {
    let mut b = params.bind(tape, false).unwrap();
    for (n, v) in b.vars.iter_mut() {
        if n == name {
            *v = leaf;
        }
    }
    b
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let m = lumpy(4, 7, 12);
    assert_eq!(m.n_vertices(), 30);
    let ops = spectra(&m, 10);
    let input = hks(&ops, 6, HksScaling::UnitL2).unwrap();
    let cfg = small_config();
    let params = init_params(&cfg, 13).unwrap();
    for (name, value) in &params.tensors {
        // biases start at zero; probe from a generic point instead
        let start = if name.ends_with("bias") {
            value.map(|_| 0.05)
        } else {
            value.clone()
        };
        let f = |tape: &mut Tape, leaf: Var| {
            let b = bound_with_leaf(&params, tape, name, leaf);
            let out = forward(tape, &b, &input, &ops, "x")?;
            tape.frobenius_sq(out.values)
        };
        let err = grad_check(f, &start, 5, 1e-5, 14).unwrap();
        assert!(err <= 1e-4, "{name}: {err}");
    }
}

#[test]
fn forward_rejects_bad_input_width() {
    let m = lumpy(4, 7, 15);
    let ops = spectra(&m, 6);
    let params = init_params(&small_config(), 0).unwrap();
    let bad = Mat::zeros(m.n_vertices(), 5);
    assert!(compute_features(&params, &bad, &ops).is_err());
}

#[test]
fn non_finite_activation_names_the_block() {
    let m = lumpy(4, 7, 16);
    let ops = spectra(&m, 6);
    let mut params = init_params(&small_config(), 0).unwrap();
    *params.get_mut("block1.lin1.weight").unwrap() = Mat::from_element(8, 8, 1e200);
    *params.get_mut("block1.lin2.weight").unwrap() = Mat::from_element(8, 8, 1e200);
    let input = hks(&ops, 6, HksScaling::UnitL2).unwrap();
    match compute_features(&params, &input, &ops) {
        Err(Error::NonFinite { op }) => assert!(op.contains("block 1"), "{op}"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_and_config_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let cfg = small_config();
    let params = init_params(&cfg, 17).unwrap();
    let meta = CheckpointMeta {
        seed: 17,
        epoch: 3,
        spectral_k: Some(40),
    };
    params.save(&path, &meta).unwrap();
    let (back, loaded) = NetParams::load(&path, Some(&cfg)).unwrap();
    assert_eq!(back, params);
    assert_eq!(loaded, meta);
    let other = NetConfig { width: 16, ..cfg };
    assert!(matches!(NetParams::load(&path, Some(&other)), Err(Error::ConfigMismatch(_))));
    let bytes = std::fs::read(&path).unwrap();
    params.save(&path, &meta).unwrap();
    assert_eq!(bytes, std::fs::read(&path).unwrap());
}
