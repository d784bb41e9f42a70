//! Finite-difference gradient suite over every loss pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, Mat, Tape, Var};
use crate::contrastive::{bidirectional_contrastive, cosine_similarity, cross_loss, self_loss, split_similarity, LossConfig};
use crate::error::Result;
use crate::fmap::{align_loss, fmap_from_pmap, soft_map, total_loss};
use crate::mesh::Mesh;
use crate::net::{forward, init_params, NetConfig};
use crate::shapes::uv_sphere;
use crate::spectral::{compute_spectra, hks, EigOptions, SpectralOperators};

/// Tolerance on the relative error reported by [`grad_check`].
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= GRAD_TOLERANCE
    }
}

/// 30-vertex sphere with seeded radial noise.
pub fn small_mesh(seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = uv_sphere(4, 7);
    let verts = base
        .vertices()
        .iter()
        .map(|p| {
            let n: f64 = rng.random_range(-0.1..0.1);
            [p[0] * (1.0 + n), p[1] * (1.15 + n), p[2] * (0.85 + n)]
        })
        .collect();
    Mesh::new(format!("probe{seed}"), verts, base.triangles().to_vec()).expect("valid probe mesh")
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Checks cross, self and align losses with respect to features, and the
/// total objective through the feature network with respect to every
/// parameter tensor.
pub fn gradient_suite(probes: usize, seed: u64) -> Result<Vec<GradReport>> {
    let h = 1e-5;
    let (mx, my) = (small_mesh(seed), small_mesh(seed + 1));
    let opts = EigOptions::default();
    let (ox, oy): (SpectralOperators, SpectralOperators) = (compute_spectra(&mx, 10, &opts)?, compute_spectra(&my, 10, &opts)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (mx.n_vertices(), my.n_vertices());
    let fx = random(n, 6, &mut rng);
    let fy = random(m, 6, &mut rng);
    let loss_cfg = LossConfig {
        p_c: 4,
        p_s: 4,
        ..LossConfig::default()
    };
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64| {
        out.push(GradReport {
            name: name.to_string(),
            max_rel_err: err,
        })
    };

    let cross = |t: &mut Tape, x: Var| {
        let y = t.constant(fy.clone())?;
        let s = cosine_similarity(t, x, y)?;
        let split = split_similarity(t, s, loss_cfg.p_c)?;
        cross_loss(t, &split, 0.8)
    };
    push("cross_loss", grad_check(cross, &fx, probes, h, seed)?);
    let selfl = |t: &mut Tape, x: Var| self_loss(t, x, loss_cfg.p_s, 1.0);
    push("self_loss", grad_check(selfl, &fx, probes, h, seed + 1)?);
    let align = |t: &mut Tape, x: Var| {
        let y = t.constant(fy.clone())?;
        let pi = soft_map(t, x, y, 0.5)?;
        let c = fmap_from_pmap(t, &pi, &ox, &oy)?;
        align_loss(t, &ox, &pi, &oy, &c)
    };
    push("align_loss", grad_check(align, &fx, probes, h, seed + 2)?);

    let net = NetConfig {
        in_dim: 6,
        width: 8,
        blocks: 2,
        ..NetConfig::default()
    };
    let params = init_params(&net, seed)?;
    let (hx, hy) = (hks(&ox, net.in_dim, net.hks_scaling)?, hks(&oy, net.in_dim, net.hks_scaling)?);
    let mut worst: f64 = 0.0;
    for (name, value) in &params.tensors {
        // zero-initialized biases sit on relu kinks; probe from a generic point
        let start = if name.ends_with("bias") { value.map(|_| 0.05) } else { value.clone() };
        let f = |t: &mut Tape, leaf: Var| {
            let mut b = params.bind(t, false)?;
            for (n, v) in b.vars.iter_mut() {
                if n == name {
                    *v = leaf;
                }
            }
            let x = forward(t, &b, &hx, &ox, "x")?.values;
            let y = forward(t, &b, &hy, &oy, "y")?.values;
            let (c, s) = bidirectional_contrastive(t, x, y, &loss_cfg)?;
            let pi = soft_map(t, x, y, 0.5)?;
            let cm = fmap_from_pmap(t, &pi, &ox, &oy)?;
            let a = align_loss(t, &ox, &pi, &oy, &cm)?;
            total_loss(t, c, s, a, &loss_cfg)
        };
        worst = worst.max(grad_check(f, &start, probes, h, seed + 3)?);
    }
    push("total_loss_through_network", worst);
    Ok(out)
}
