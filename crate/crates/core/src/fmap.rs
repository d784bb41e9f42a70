//! Soft pointwise maps, functional maps by spectral projection, the
//! alignment loss, the regularized least-squares baseline and pointwise map
//! recovery.

use nalgebra::{Cholesky, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::contrastive::LossConfig;
use crate::error::{Error, Result};
use crate::mesh::Correspondence;
use crate::spectral::SpectralOperators;

pub const DEFAULT_ALPHA: f64 = 0.07;

/// Row-stochastic soft correspondence `Pi` from `X` to `Y`.
#[derive(Debug, Clone, Copy)]
pub struct SoftMap {
    pub pi: Var,
    pub alpha: f64,
}

/// `C_YX`, mapping spectral coefficients on `Y` to those on `X`.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalMap {
    pub c: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub lambda_reg: f64,
    pub theta_bi: f64,
    pub theta_or: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            lambda_reg: 1e-3,
            theta_bi: 1.0,
            theta_or: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_reg, self.theta_bi, self.theta_or]
            .iter()
            .any(|&x| !(x >= 0.0) || !x.is_finite())
        {
            return Err(Error::invalid("baseline weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `softmax_rows(F_X F_Y^T / alpha)` on raw dot products.
pub fn soft_map(tape: &mut Tape, fx: Var, fy: Var, alpha: f64) -> Result<SoftMap> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("soft map temperature must be positive"));
    }
    let fyt = tape.transpose(fy)?;
    let logits = tape.matmul(fx, fyt)?;
    let logits = tape.scale(logits, 1.0 / alpha)?;
    Ok(SoftMap {
        pi: tape.softmax_rows(logits)?,
        alpha,
    })
}

/// `C_YX = ((Phi_X^T A_X) Pi) Phi_Y`.
pub fn fmap_from_pmap(
    tape: &mut Tape,
    pi: &SoftMap,
    ops_x: &SpectralOperators,
    ops_y: &SpectralOperators,
) -> Result<FunctionalMap> {
    let left = tape.left_mul_const(ops_x.phi_pinv.clone(), pi.pi)?;
    Ok(FunctionalMap {
        c: tape.right_mul_const(left, ops_y.phi.clone())?,
    })
}

/// Value-only projection used by inference and benchmarks.
pub fn project_fmap(pi: &Mat, ops_x: &SpectralOperators, ops_y: &SpectralOperators) -> Result<Mat> {
    if pi.shape() != (ops_x.n_vertices(), ops_y.n_vertices()) {
        return Err(Error::ShapeMismatch {
            op: "fmap_from_pmap",
            lhs: pi.shape(),
            rhs: (ops_x.n_vertices(), ops_y.n_vertices()),
        });
    }
    Ok((&*ops_x.phi_pinv * pi) * &*ops_y.phi)
}

/// `||Phi_X - Pi Phi_Y C^T||_F^2`.
pub fn align_loss(
    tape: &mut Tape,
    ops_x: &SpectralOperators,
    pi: &SoftMap,
    ops_y: &SpectralOperators,
    c: &FunctionalMap,
) -> Result<Var> {
    let pulled = tape.right_mul_const(pi.pi, ops_y.phi.clone())?;
    let ct = tape.transpose(c.c)?;
    let mapped = tape.matmul(pulled, ct)?;
    let phi_x = tape.constant((*ops_x.phi).clone())?;
    let r = tape.sub(phi_x, mapped)?;
    tape.frobenius_sq(r)
}

pub fn total_loss(tape: &mut Tape, cross: Var, self_: Var, align: Var, cfg: &LossConfig) -> Result<Var> {
    let a = tape.scale(cross, cfg.theta_cross)?;
    let b = tape.scale(self_, cfg.theta_self)?;
    let c = tape.scale(align, cfg.theta_align)?;
    let ab = tape.add(a, b)?;
    tape.add(ab, c)
}

/// Minimizes `||C A - B||^2 + lambda sum_ij C_ij^2 (lx_i - ly_j)^2` one row
/// at a time: `(A A^T + lambda D_i) c_i = A B_i^T`.
///
/// `desc_y` is `A` (`k_y x d`), `desc_x` is `B` (`k_x x d`); the result is
/// `k_x x k_y`.
pub fn baseline_solve_fmap(
    desc_x: &Mat,
    desc_y: &Mat,
    lambda_x: &[f64],
    lambda_y: &[f64],
    lambda_reg: f64,
) -> Result<Mat> {
    let (kx, ky) = (desc_x.nrows(), desc_y.nrows());
    if desc_x.ncols() != desc_y.ncols() {
        return Err(Error::ShapeMismatch {
            op: "baseline_solve_fmap",
            lhs: desc_x.shape(),
            rhs: desc_y.shape(),
        });
    }
    if lambda_x.len() != kx || lambda_y.len() != ky {
        return Err(Error::LengthMismatch {
            expected: kx + ky,
            found: lambda_x.len() + lambda_y.len(),
        });
    }
    if !(lambda_reg >= 0.0) {
        return Err(Error::invalid("regularizer weight must be nonnegative"));
    }
    let gram = desc_y * desc_y.transpose();
    let rhs = desc_y * desc_x.transpose();
    let mut c = Mat::zeros(kx, ky);
    for i in 0..kx {
        let mut m = gram.clone();
        for j in 0..ky {
            let d = lambda_x[i] - lambda_y[j];
            m[(j, j)] += lambda_reg * d * d;
        }
        let chol = Cholesky::new(m).ok_or_else(|| {
            Error::Singular(format!("baseline system for row {i} is not positive definite"))
        })?;
        let sol: DVector<f64> = chol.solve(&rhs.column(i).into_owned());
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(Error::Singular(format!("baseline system for row {i} is singular")));
        }
        c.row_mut(i).copy_from(&sol.transpose());
    }
    Ok(c)
}

/// Bijectivity, orthogonality and coupling losses of the classical
/// pipeline: `||C_YX C_XY - I||^2`, `||C_YX C_YX^T - I||^2` and
/// `||C_YX - Phi_X^+ Pi_XY Phi_Y||^2`.
pub fn baseline_losses(
    tape: &mut Tape,
    c_xy: &FunctionalMap,
    c_yx: &FunctionalMap,
    pi_xy: &SoftMap,
    ops_x: &SpectralOperators,
    ops_y: &SpectralOperators,
) -> Result<(Var, Var, Var)> {
    let k = tape.shape(c_yx.c).0;
    let eye = tape.constant(Mat::identity(k, k))?;
    let prod = tape.matmul(c_yx.c, c_xy.c)?;
    let r_bi = tape.sub(prod, eye)?;
    let l_bi = tape.frobenius_sq(r_bi)?;
    let ct = tape.transpose(c_yx.c)?;
    let gram = tape.matmul(c_yx.c, ct)?;
    let r_or = tape.sub(gram, eye)?;
    let l_or = tape.frobenius_sq(r_or)?;
    let projected = fmap_from_pmap(tape, pi_xy, ops_x, ops_y)?;
    let r_co = tape.sub(c_yx.c, projected.c)?;
    let l_co = tape.frobenius_sq(r_co)?;
    Ok((l_bi, l_or, l_co))
}

const NN_BLOCK: usize = 256;

/// Index of the nearest row of `targets` for every row of `queries`
/// (squared Euclidean distance, lowest index on ties).
pub fn nearest_rows(queries: &Mat, targets: &Mat) -> Result<Vec<usize>> {
    if queries.ncols() != targets.ncols() {
        return Err(Error::ShapeMismatch {
            op: "nearest_rows",
            lhs: queries.shape(),
            rhs: targets.shape(),
        });
    }
    let t_norms: Vec<f64> = targets.row_iter().map(|r| r.norm_squared()).collect();
    let tt = targets.transpose();
    let n = queries.nrows();
    let blocks: Vec<Vec<usize>> = (0..n.div_ceil(NN_BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * NN_BLOCK;
            let rows = NN_BLOCK.min(n - start);
            let q = queries.rows(start, rows);
            // ||q - t||^2 minus the per-query constant ||q||^2
            let dots = q * &tt;
            (0..rows)
                .map(|r| {
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for (j, &tn) in t_norms.iter().enumerate() {
                        let d = tn - 2.0 * dots[(r, j)];
                        if d < best_d {
                            best_d = d;
                            best = j;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// For each vertex `x` of `X`, the vertex of `Y` whose row of
/// `Phi_Y C_YX^T` is nearest to `Phi_X[x]`.
pub fn recover_pmap(ops_x: &SpectralOperators, ops_y: &SpectralOperators, c_yx: &Mat) -> Result<Correspondence> {
    if c_yx.shape() != (ops_x.k(), ops_y.k()) {
        return Err(Error::ShapeMismatch {
            op: "recover_pmap",
            lhs: c_yx.shape(),
            rhs: (ops_x.k(), ops_y.k()),
        });
    }
    let embedded = &*ops_y.phi * c_yx.transpose();
    let map = nearest_rows(&ops_x.phi, &embedded)?;
    Ok(Correspondence {
        source_to_target: map,
        source_name: String::new(),
        target_name: String::new(),
    })
}

/// Timings of one inference, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MatchTimings {
    pub fmap_ms: f64,
    pub nn_ms: f64,
}

/// Soft map from learned features, projected functional map, then
/// nearest-neighbour recovery.
pub fn match_features(
    fx: &Mat,
    fy: &Mat,
    ops_x: &SpectralOperators,
    ops_y: &SpectralOperators,
    alpha: f64,
) -> Result<(Correspondence, Mat, MatchTimings)> {
    let t0 = std::time::Instant::now();
    let pi = soft_map_values(fx, fy, alpha)?;
    let c = project_fmap(&pi, ops_x, ops_y)?;
    let t1 = std::time::Instant::now();
    let corr = recover_pmap(ops_x, ops_y, &c)?;
    let timings = MatchTimings {
        fmap_ms: (t1 - t0).as_secs_f64() * 1e3,
        nn_ms: t1.elapsed().as_secs_f64() * 1e3,
    };
    Ok((corr, c, timings))
}

/// Value-only soft map.
pub fn soft_map_values(fx: &Mat, fy: &Mat, alpha: f64) -> Result<Mat> {
    let mut tape = Tape::new();
    let x = tape.constant(fx.clone())?;
    let y = tape.constant(fy.clone())?;
    let pi = soft_map(&mut tape, x, y, alpha)?;
    Ok(tape.value(pi.pi).clone())
}

