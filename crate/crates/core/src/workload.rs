//! Timing workloads for the efficiency benchmarks.
//!
//! Operators are synthetic: a random mass-orthonormal basis over a UV
//! sphere's lumped mass with linearly spaced eigenvalues. The timed kernels
//! are dense and their cost depends only on `|V|`, `k` and the feature width.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::fmap::{baseline_solve_fmap, project_fmap, recover_pmap, soft_map_values, DEFAULT_ALPHA};
use crate::net::{init_params, NetParams};
use crate::shapes::uv_sphere;
use crate::spectral::{lumped_mass, SpectralOperators};
use crate::train::{pair_step, Dataset, ShapeData, TrainConfig};

/// Output width of the feature network, used as descriptor count.
pub const FEATURE_DIM: usize = 128;

/// UV sphere with roughly `n` vertices.
pub fn sphere_near(n: usize) -> Result<crate::mesh::Mesh> {
    if n < 10 {
        return Err(Error::invalid("benchmark size must be at least 10"));
    }
    let rings = ((n as f64 / 2.0).sqrt().round() as usize).max(2);
    let segments = ((n - 2) / rings).max(3);
    Ok(uv_sphere(rings, segments))
}

/// Random basis orthonormal under the lumped mass of `mesh`.
pub fn surrogate_operators(mesh: &crate::mesh::Mesh, k: usize, seed: u64) -> Result<SpectralOperators> {
    let n = mesh.n_vertices();
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds {n} vertices")));
    }
    let mass = DVector::from_vec(lumped_mass(mesh));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    // mass-weighted Gram-Schmidt via Cholesky of Phi^T A Phi
    let mut weighted = phi.clone();
    for (i, &a) in mass.iter().enumerate() {
        weighted.row_mut(i).scale_mut(a);
    }
    let gram = phi.transpose() * weighted;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("surrogate basis Gram matrix".into()))?;
    let l_inv_t = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Singular("surrogate basis factor".into()))?
        .transpose();
    phi *= l_inv_t;
    let lambda = DVector::from_fn(k, |i, _| i as f64);
    SpectralOperators::new(phi, lambda, mass)
}

/// One synthetic pair with random features and their soft map.
pub struct BenchPair {
    pub data: Dataset,
    pub params: NetParams,
    pub fx: Mat,
    pub fy: Mat,
    pub pi: Mat,
}

pub fn bench_pair(n: usize, k: usize, seed: u64) -> Result<BenchPair> {
    let mesh = sphere_near(n)?;
    let cfg = TrainConfig::new(1);
    let mut shapes = Vec::new();
    for s in 0..2 {
        let mut m = mesh.clone();
        m.name = format!("bench{n}-{s}");
        let ops = surrogate_operators(&m, k, seed + s)?;
        shapes.push(ShapeData::new(m, ops, &cfg.net)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = mesh.n_vertices();
    // small scale keeps the soft map away from one-hot rows
    let mut feat = || Mat::from_fn(nv, FEATURE_DIM, |_, _| rng.random_range(-0.1..0.1));
    let (fx, fy) = (feat(), feat());
    let pi = soft_map_values(&fx, &fy, DEFAULT_ALPHA)?;
    Ok(BenchPair {
        data: Dataset {
            shapes,
            pairs: vec![(0, 1)],
        },
        params: init_params(&cfg.net, seed)?,
        fx,
        fy,
        pi,
    })
}

impl BenchPair {
    pub fn n_vertices(&self) -> usize {
        self.data.shapes[0].mesh.n_vertices()
    }

    pub fn projection(&self) -> Result<Mat> {
        project_fmap(&self.pi, &self.data.shapes[0].ops, &self.data.shapes[1].ops)
    }

    /// Classical solver including the descriptor projections it needs.
    pub fn baseline_solver(&self) -> Result<Mat> {
        let (ox, oy) = (&self.data.shapes[0].ops, &self.data.shapes[1].ops);
        let b = &*ox.phi_pinv * &self.fx;
        let a = &*oy.phi_pinv * &self.fy;
        baseline_solve_fmap(&b, &a, ox.lambda.as_slice(), oy.lambda.as_slice(), 1e-3)
    }

    pub fn nn_search(&self, c_yx: &Mat) -> Result<crate::mesh::Correspondence> {
        recover_pmap(&self.data.shapes[0].ops, &self.data.shapes[1].ops, c_yx)
    }

    pub fn train_step(&self) -> Result<f64> {
        let mut cfg = TrainConfig::new(1);
        cfg.loss.p_c = cfg.loss.p_c.min(self.n_vertices() - 1);
        cfg.loss.p_s = cfg.loss.p_s.min(self.n_vertices() - 1);
        Ok(pair_step(&self.params, &self.data, (0, 1), &cfg)?.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub ks: Vec<usize>,
    pub reps: usize,
    /// Largest size at which the training step is timed (dense `|V|^2`
    /// intermediates dominate memory above it).
    pub train_step_max_size: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![1000, 2000, 5000],
            ks: vec![100, 200],
            reps: 5,
            train_step_max_size: 2000,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 5 {
            return Err(Error::invalid("benchmarks need at least 5 repetitions"));
        }
        if self.sizes.is_empty() || self.ks.is_empty() {
            return Err(Error::invalid("benchmark sizes and k values must be nonempty"));
        }
        let (smallest, largest_k) = (self.sizes.iter().min(), self.ks.iter().max());
        if let (Some(&s), Some(&k)) = (smallest, largest_k) {
            // sphere_near rounds down by up to a few percent
            if k + 2 > s * 9 / 10 {
                return Err(Error::invalid(format!("k = {k} too large for size {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub k: usize,
    pub op: String,
    pub median_ms: f64,
}

pub const BENCH_HEADER: &str = "size,k,op,median_ms";
/// Row whose `median_ms` column holds the projection/solver time ratio.
pub const RATIO_OP: &str = "projection_to_solver_ratio";

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_reps<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut ms = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(f()?);
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(ms))
}

/// Median timings per (size, k, op), plus the projection/solver ratio.
pub fn run_bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut emit = |row: BenchRow, rows: &mut Vec<BenchRow>| {
        progress(&row);
        rows.push(row);
    };
    for &size in &cfg.sizes {
        for &k in &cfg.ks {
            let pair = bench_pair(size, k, cfg.seed)?;
            let row = |op: &str, median_ms: f64| BenchRow {
                size,
                k,
                op: op.to_string(),
                median_ms,
            };
            let proj = time_reps(cfg.reps, || pair.projection())?;
            emit(row("fmap_from_pmap", proj), &mut rows);
            let solver = time_reps(cfg.reps, || pair.baseline_solver())?;
            emit(row("baseline_solve_fmap", solver), &mut rows);
            emit(row(RATIO_OP, proj / solver), &mut rows);
            let c = pair.projection()?;
            let nn = time_reps(cfg.reps, || pair.nn_search(&c))?;
            emit(row("nn_search", nn), &mut rows);
            if size <= cfg.train_step_max_size {
                let step = time_reps(cfg.reps, || pair.train_step())?;
                emit(row("train_step", step), &mut rows);
            }
        }
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(BENCH_HEADER.split(','))
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}
