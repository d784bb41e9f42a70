use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mat, Tape, Var};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients of `f` against central finite differences.
///
/// `f` receives a fresh tape and the leaf holding `leaf_value` and must
/// return a scalar node. Probes pick `n_probes` random entries of the leaf
/// (distinct while possible). Returns the largest
/// `|fd - ad| / max(1e-8, |fd|, |ad|)` over the probes.
pub fn grad_check<F>(f: F, leaf_value: &Mat, n_probes: usize, h: f64, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(leaf_value.clone())?;
    let root = f(&mut tape, leaf)?;
    tape.backward(root)?;
    let zero = Mat::zeros(leaf_value.nrows(), leaf_value.ncols());
    let ad = tape.grad(leaf).unwrap_or(&zero).clone();

    let eval = |value: Mat| -> Result<f64> {
        let mut t = Tape::new();
        let l = t.leaf(value)?;
        let r = f(&mut t, l)?;
        Ok(t.scalar(r))
    };

    let total = leaf_value.len();
    if total == 0 {
        return Err(Error::invalid("grad_check on an empty leaf"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(n_probes);
    while picked.len() < n_probes {
        let i = rng.random_range(0..total);
        if picked.contains(&i) && picked.len() < total {
            continue;
        }
        picked.push(i);
    }
    let mut worst: f64 = 0.0;
    for i in picked {
        let mut plus = leaf_value.clone();
        plus[i] += h;
        let mut minus = leaf_value.clone();
        minus[i] -= h;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = ad[i];
        let err = (fd - a).abs() / 1e-8f64.max(fd.abs()).max(a.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
