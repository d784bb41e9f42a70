use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralOperators;

/// Diffusion times `exp(linspace(ln(4 ln10 / lambda_k), ln(4 ln10 / lambda_2), n))`.
pub fn hks_times(ops: &SpectralOperators, n_times: usize) -> Result<Vec<f64>> {
    if n_times == 0 {
        return Err(Error::invalid("HKS needs at least one time"));
    }
    let k = ops.k();
    if k < 2 {
        return Err(Error::invalid("HKS needs k >= 2"));
    }
    let l2 = ops.lambda[1];
    if l2 <= 0.0 {
        return Err(Error::Disconnected(l2));
    }
    let c = 4.0 * std::f64::consts::LN_10;
    let lo = (c / ops.lambda[k - 1]).ln();
    let hi = (c / l2).ln();
    Ok((0..n_times)
        .map(|j| {
            let s = if n_times == 1 { 0.0 } else { j as f64 / (n_times - 1) as f64 };
            (lo + s * (hi - lo)).exp()
        })
        .collect())
}

/// Raw heat kernel signature `sum_i exp(-lambda_i t) phi_i(x)^2`, `|V| x n_times`.
pub fn hks_raw(ops: &SpectralOperators, n_times: usize) -> Result<DMatrix<f64>> {
    let times = hks_times(ops, n_times)?;
    let k = ops.k();
    let decay = DMatrix::from_fn(k, n_times, |i, j| (-ops.lambda[i] * times[j]).exp());
    let sq = ops.phi.map(|v| v * v);
    Ok(sq * decay)
}

/// Per-column rescaling applied to HKS descriptors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HksScaling {
    /// Raw values.
    None,
    /// Unit L2 norm over vertices.
    UnitL2,
    /// Zero mean and unit variance over vertices.
    #[default]
    Standardize,
}

/// HKS descriptors with each column rescaled per `scaling`.
pub fn hks(ops: &SpectralOperators, n_times: usize, scaling: HksScaling) -> Result<DMatrix<f64>> {
    let mut h = hks_raw(ops, n_times)?;
    let n = h.nrows() as f64;
    for mut col in h.column_iter_mut() {
        match scaling {
            HksScaling::None => {}
            HksScaling::UnitL2 => {
                let nrm = col.norm();
                if nrm > 0.0 {
                    col /= nrm;
                }
            }
            HksScaling::Standardize => {
                let mean = col.sum() / n;
                col.add_scalar_mut(-mean);
                let sd = (col.norm_squared() / n).sqrt();
                // constant columns (e.g. on a round sphere) stay at zero
                if sd > 1e-300 {
                    col /= sd;
                }
            }
        }
    }
    Ok(h)
}
