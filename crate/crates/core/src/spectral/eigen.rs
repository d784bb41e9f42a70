//! Smallest eigenpairs of the pencil `L x = lambda A x` with diagonal `A`.
//!
//! The operator `(L - sigma A)^{-1} A` is self-adjoint in the `A` inner
//! product and maps the smallest eigenvalues of the pencil to its largest.
//! A block Krylov basis of that operator is grown with full (twice-applied)
//! `A`-orthogonalization, and Rayleigh-Ritz extraction is repeated until the
//! wanted pairs meet the residual tolerance. A final Rayleigh-Ritz step on `L`
//! itself restores exact `A`-orthonormality of the returned basis.

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::{EnvelopeCholesky, SparseSym};

#[derive(Debug, Clone)]
pub struct EigOptions {
    /// Spectral shift; slightly negative so `L - sigma A` is positive definite.
    pub sigma: f64,
    /// Per-pair relative residual required for convergence.
    pub tol: f64,
    /// Absolute residual tolerance for the near-zero first pair.
    pub abs_tol: f64,
    /// Cap on operator applications; `None` means `100 * k`.
    pub max_iter: Option<usize>,
    pub block_size: usize,
    pub seed: u64,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            sigma: -1e-8,
            tol: 1e-8,
            abs_tol: 1e-8,
            max_iter: None,
            block_size: 8,
            seed: 0,
        }
    }
}

/// Truncated spectral basis of one shape.
#[derive(Debug, Clone)]
pub struct SpectralOperators {
    /// `|V| x k`, columns ordered by ascending eigenvalue.
    pub phi: Arc<DMatrix<f64>>,
    pub lambda: DVector<f64>,
    pub mass: DVector<f64>,
    /// `k x |V|`, equal to `phi^T diag(mass)`.
    pub phi_pinv: Arc<DMatrix<f64>>,
}

impl SpectralOperators {
    /// Assembles operators from a basis, deriving the pseudo-inverse.
    pub fn new(phi: DMatrix<f64>, lambda: DVector<f64>, mass: DVector<f64>) -> Result<Self> {
        if phi.nrows() != mass.len() || phi.ncols() != lambda.len() {
            return Err(Error::ShapeMismatch {
                op: "SpectralOperators::new",
                lhs: phi.shape(),
                rhs: (mass.len(), lambda.len()),
            });
        }
        let mut pinv = phi.transpose();
        for (j, &a) in mass.iter().enumerate() {
            pinv.column_mut(j).scale_mut(a);
        }
        Ok(SpectralOperators {
            phi: Arc::new(phi),
            lambda,
            mass,
            phi_pinv: Arc::new(pinv),
        })
    }

    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.mass.len()
    }

    /// Keeps only the first `k` eigenpairs.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::invalid(format!("cannot truncate {} pairs to {k}", self.k())));
        }
        SpectralOperators::new(
            self.phi.columns(0, k).into_owned(),
            self.lambda.rows(0, k).into_owned(),
            self.mass.clone(),
        )
    }

    /// Measures every stated invariant of the basis against `l`.
    pub fn check(&self, l: &SparseSym) -> InvariantReport {
        let k = self.k();
        let lphi = l.mul_dense(&self.phi);
        let mut aphi_lambda = (*self.phi).clone();
        for (i, &a) in self.mass.iter().enumerate() {
            aphi_lambda.row_mut(i).scale_mut(a);
        }
        for (j, &lam) in self.lambda.iter().enumerate() {
            aphi_lambda.column_mut(j).scale_mut(lam);
        }
        let resid = &lphi - &aphi_lambda;
        let first_residual = resid.column(0).norm();
        let rest_residual = if k > 1 {
            resid.columns(1, k - 1).norm() / aphi_lambda.columns(1, k - 1).norm()
        } else {
            0.0
        };
        let gram = &*self.phi_pinv * &*self.phi;
        let orthonormality = (gram - DMatrix::identity(k, k)).amax();
        let ascending = self.lambda.as_slice().windows(2).all(|w| w[0] <= w[1]);
        InvariantReport {
            first_residual,
            rest_residual,
            orthonormality,
            min_eigenvalue: self.lambda.min(),
            ascending,
            first_ratio: self.lambda[0] / self.lambda[k - 1],
        }
    }
}

/// Measured invariants of a [`SpectralOperators`] value.
#[derive(Debug, Clone, Copy)]
pub struct InvariantReport {
    /// Absolute residual norm of the first (constant) pair.
    pub first_residual: f64,
    /// `||L Phi - A Phi Lambda||_F / ||A Phi Lambda||_F` over pairs 2..k.
    pub rest_residual: f64,
    /// `max |Phi^T A Phi - I|`.
    pub orthonormality: f64,
    pub min_eigenvalue: f64,
    pub ascending: bool,
    /// `lambda_1 / lambda_k`.
    pub first_ratio: f64,
}

impl InvariantReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.first_residual <= 1e-8
            && self.rest_residual <= tol
            && self.orthonormality <= tol
            && self.min_eigenvalue >= 0.0
            && self.ascending
            && self.first_ratio <= 1e-6
    }
}

fn a_dot(mass: &[f64], x: &[f64], y: &[f64]) -> f64 {
    mass.iter().zip(x).zip(y).map(|((a, x), y)| a * x * y).sum()
}

/// Orthogonalizes `v` against `basis` in the `A` inner product (two passes)
/// and normalizes it. Returns `None` if `v` is numerically in the span.
fn a_orthonormalize(mass: &[f64], basis: &[DVector<f64>], v: &mut DVector<f64>) -> Option<()> {
    let start = a_dot(mass, v.as_slice(), v.as_slice()).sqrt();
    if start == 0.0 || !start.is_finite() {
        return None;
    }
    for _ in 0..2 {
        for q in basis {
            let c = a_dot(mass, q.as_slice(), v.as_slice());
            v.axpy(-c, q, 1.0);
        }
    }
    let nrm = a_dot(mass, v.as_slice(), v.as_slice()).sqrt();
    if nrm <= 1e-10 * start {
        return None;
    }
    *v /= nrm;
    Some(())
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
pub fn fix_signs(phi: &mut DMatrix<f64>) {
    for mut col in phi.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Computes the `k` smallest generalized eigenpairs of `(l, diag(mass))`.
pub fn eig_k(l: &SparseSym, mass: &[f64], k: usize, opts: &EigOptions) -> Result<SpectralOperators> {
    let n = l.n();
    if mass.len() != n {
        return Err(Error::ShapeMismatch {
            op: "eig_k",
            lhs: (n, n),
            rhs: (mass.len(), 1),
        });
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 0 < k < |V| = {n}")));
    }
    if let Some(i) = mass.iter().position(|&a| !(a > 0.0)) {
        return Err(Error::invalid(format!("mass entry {i} is not positive")));
    }
    let shifted = l.add_diagonal(-opts.sigma, mass);
    let chol = EnvelopeCholesky::factor(&shifted)?;
    let apply_op = |q: &DVector<f64>| -> DVector<f64> {
        let mut w: Vec<f64> = q.iter().zip(mass).map(|(x, a)| x * a).collect();
        chol.solve_in_place(&mut w);
        DVector::from_vec(w)
    };

    let max_iter = opts.max_iter.unwrap_or(100 * k).max(k + 1);
    let block = opts.block_size.clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut images: Vec<DVector<f64>> = Vec::new();
    let mut pending: Vec<DVector<f64>> = (0..block).map(|_| random_vec(&mut rng)).collect();
    let mut next_check = (2 * k + block).min(n);
    let mut best_residual = f64::INFINITY;

    loop {
        let mut added = 0;
        for mut v in pending.drain(..) {
            if basis.len() == n {
                break;
            }
            if a_orthonormalize(mass, &basis, &mut v).is_some() {
                images.push(apply_op(&v));
                basis.push(v);
                added += 1;
            }
        }
        if added == 0 && basis.len() < n {
            // Krylov space became invariant: restart with fresh directions
            let mut tries = 0;
            while basis.len() < n && tries < 10 * block {
                let mut v = random_vec(&mut rng);
                if a_orthonormalize(mass, &basis, &mut v).is_some() {
                    images.push(apply_op(&v));
                    basis.push(v);
                    break;
                }
                tries += 1;
            }
        }
        let m = basis.len();
        if m >= next_check || m == n {
            let (vecs, residual) = ritz_extract(l, mass, &basis, &images, k, opts.sigma);
            best_residual = best_residual.min(residual);
            debug!("eig_k: basis {m}, worst residual {residual:e}");
            if residual <= opts.tol {
                return finalize(l, mass, vecs, opts);
            }
            if m == n {
                // the full space is spanned; remaining error is rounding
                return finalize(l, mass, vecs, opts);
            }
            next_check = (m + (k / 4).max(block)).min(n);
        }
        if basis.len() >= max_iter {
            return Err(Error::NotConverged {
                residual: best_residual,
                iterations: basis.len(),
            });
        }
        let start = images.len() - added.max(1).min(images.len());
        pending = images[start..].to_vec();
    }
}

/// Rayleigh-Ritz on the Krylov basis. Returns the `k` wanted Ritz vectors and the
/// worst per-pair residual (absolute for the first pair, relative otherwise).
fn ritz_extract(
    l: &SparseSym,
    mass: &[f64],
    basis: &[DVector<f64>],
    images: &[DVector<f64>],
    k: usize,
    sigma: f64,
) -> (DMatrix<f64>, f64) {
    let n = l.n();
    let m = basis.len();
    let q = DMatrix::from_columns(basis);
    let mut aw = DMatrix::from_columns(images);
    for (i, &a) in mass.iter().enumerate() {
        aw.row_mut(i).scale_mut(a);
    }
    let h = q.transpose() * aw;
    let h = (&h + h.transpose()) * 0.5;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let wanted = &order[..k.min(m)];
    let y = DMatrix::from_columns(&wanted.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    let x = &q * y;
    let vals: Vec<f64> = wanted
        .iter()
        .map(|&i| sigma + 1.0 / eig.eigenvalues[i])
        .collect();
    let lx = l.mul_dense(&x);
    let mut worst: f64 = 0.0;
    for (j, &lam) in vals.iter().enumerate() {
        let mut r2 = 0.0;
        let mut d2 = 0.0;
        for i in 0..n {
            let ax = mass[i] * x[(i, j)] * lam;
            r2 += (lx[(i, j)] - ax).powi(2);
            d2 += ax * ax;
        }
        let res = if j == 0 { r2.sqrt() } else { (r2 / d2).sqrt() };
        worst = worst.max(res);
    }
    (x, worst)
}

/// Rayleigh-Ritz with `L` on the converged vectors, sign fixing and checks.
fn finalize(
    l: &SparseSym,
    mass: &[f64],
    x: DMatrix<f64>,
    opts: &EigOptions,
) -> Result<SpectralOperators> {
    let mut ax = x.clone();
    for (i, &a) in mass.iter().enumerate() {
        ax.row_mut(i).scale_mut(a);
    }
    let gram = x.transpose() * &ax;
    let gram = (&gram + gram.transpose()) * 0.5;
    let stiff = x.transpose() * l.mul_dense(&x);
    let stiff = (&stiff + stiff.transpose()) * 0.5;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("Ritz vectors lost A-independence".into()))?;
    let lower = chol.l();
    let linv = lower
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("Ritz Gram factor".into()))?;
    let reduced = &linv * stiff * linv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = reduced.symmetric_eigen();
    let k = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let coeffs = linv.transpose() * &eig.eigenvectors;
    let coeffs = DMatrix::from_columns(&order.iter().map(|&i| coeffs.column(i)).collect::<Vec<_>>());
    let mut phi = x * coeffs;
    fix_signs(&mut phi);
    let lambda_k = eig.eigenvalues[order[k - 1]].abs().max(f64::MIN_POSITIVE);
    let lambda = DVector::from_iterator(
        k,
        order.iter().map(|&i| {
            let v = eig.eigenvalues[i];
            // rounding can leave the kernel eigenvalue a hair below zero
            if v < 0.0 && v.abs() <= 1e-10 * lambda_k {
                0.0
            } else {
                v
            }
        }),
    );
    if lambda[0] < 0.0 {
        return Err(Error::NotPositiveDefinite {
            row: 0,
            pivot: lambda[0],
        });
    }
    if k >= 2 && lambda[1] <= 1e-8 * lambda_k {
        return Err(Error::Disconnected(lambda[1]));
    }
    let ops = SpectralOperators::new(phi, lambda, DVector::from_column_slice(mass))?;
    let report = ops.check(l);
    if report.rest_residual > opts.tol.max(1e-6) || report.first_residual > opts.abs_tol.max(1e-8) {
        return Err(Error::NotConverged {
            residual: report.rest_residual.max(report.first_residual),
            iterations: 0,
        });
    }
    Ok(ops)
}
