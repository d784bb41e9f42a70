//! Hybrid similarity generator and the cross-/self-contrastive losses.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{topk_rows, RowMask, Tape, Var};
use crate::error::{Error, Result};

/// Guard for zero-norm feature rows in cosine normalization.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub p_c: usize,
    pub p_s: usize,
    pub tau_c: f64,
    pub tau_s: f64,
    pub theta_cross: f64,
    pub theta_self: f64,
    pub theta_align: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            p_c: 30,
            p_s: 30,
            tau_c: 1.0,
            tau_s: 1.0,
            theta_cross: 1.0,
            theta_self: 0.1,
            theta_align: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_c == 0 || self.p_s == 0 {
            return Err(Error::invalid("positive counts must be at least 1"));
        }
        if !(self.tau_c > 0.0 && self.tau_s > 0.0) {
            return Err(Error::invalid("temperatures must be positive"));
        }
        let w = [self.theta_cross, self.theta_self, self.theta_align];
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Optional down-sampling of each row's negative set. Receives the row
/// index and its full negative set in ascending column order.
pub trait NegativeSampler {
    fn sample(&self, row: usize, negatives: &[usize]) -> Vec<usize>;
}

/// Keeps every negative.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllNegatives;

impl NegativeSampler for AllNegatives {
    fn sample(&self, _row: usize, negatives: &[usize]) -> Vec<usize> {
        negatives.to_vec()
    }
}

/// Similarity matrix split into per-row top-`p` positives and the rest.
#[derive(Debug, Clone)]
pub struct SimilaritySplit {
    pub sim: Var,
    pub positive_idx: Arc<Vec<Vec<usize>>>,
    pub p: usize,
    /// Excluded entries: positives plus any negatives dropped by a sampler.
    excluded: RowMask,
}

impl SimilaritySplit {
    pub fn negative_mask(&self) -> &RowMask {
        &self.excluded
    }
}

/// `normalize_rows(F_X) normalize_rows(F_Y)^T`.
pub fn cosine_similarity(tape: &mut Tape, fx: Var, fy: Var) -> Result<Var> {
    let (sx, sy) = (tape.shape(fx), tape.shape(fy));
    if sx.1 != sy.1 {
        return Err(Error::ShapeMismatch {
            op: "cosine_similarity",
            lhs: sx,
            rhs: sy,
        });
    }
    let nx = tape.row_l2_normalize(fx, COSINE_EPS)?;
    let ny = if fx == fy { nx } else { tape.row_l2_normalize(fy, COSINE_EPS)? };
    let nyt = tape.transpose(ny)?;
    tape.matmul(nx, nyt)
}

pub fn split_similarity(tape: &Tape, sim: Var, p: usize) -> Result<SimilaritySplit> {
    split_similarity_with(tape, sim, p, &AllNegatives)
}

pub fn split_similarity_with(
    tape: &Tape,
    sim: Var,
    p: usize,
    sampler: &dyn NegativeSampler,
) -> Result<SimilaritySplit> {
    let (rows, cols) = tape.shape(sim);
    if p == 0 || p >= cols {
        return Err(Error::invalid(format!(
            "positive count {p} leaves no negatives in rows of length {cols}"
        )));
    }
    let positive_idx = topk_rows(tape.value(sim), p);
    let mut excluded = RowMask::from_row_indices(rows, cols, &positive_idx);
    let mut negatives = Vec::with_capacity(cols);
    for r in 0..rows {
        negatives.clear();
        negatives.extend((0..cols).filter(|&c| !excluded.is_excluded(r, c)));
        let kept = sampler.sample(r, &negatives);
        if kept.is_empty() {
            return Err(Error::invalid(format!("sampler left row {r} without negatives")));
        }
        if kept.len() != negatives.len() {
            let mut keep = vec![false; cols];
            for &c in &kept {
                keep[c] = true;
            }
            for &c in &negatives {
                if !keep[c] {
                    excluded.exclude(r, c);
                }
            }
        }
    }
    Ok(SimilaritySplit {
        sim,
        positive_idx: Arc::new(positive_idx),
        p,
        excluded,
    })
}

fn row_mean(tape: &mut Tape, col: Var) -> Result<Var> {
    let n = tape.shape(col).0 as f64;
    let s = tape.sum(col)?;
    tape.scale(s, 1.0 / n)
}

/// Mean over rows of `-mean(positives)/tau + logsumexp(negatives/tau)`.
pub fn cross_loss(tape: &mut Tape, split: &SimilaritySplit, tau_c: f64) -> Result<Var> {
    if !(tau_c > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let scaled = tape.scale(split.sim, 1.0 / tau_c)?;
    let pos = tape.mean_selected_rows(scaled, split.positive_idx.clone())?;
    let neg = tape.logsumexp_rows_masked(scaled, &split.excluded)?;
    let per_row = tape.sub(neg, pos)?;
    row_mean(tape, per_row)
}

/// Mean over rows of the logsumexp of each row's non-top-`p_s` self
/// similarities. The diagonal is not masked; it lands among the positives.
pub fn self_loss(tape: &mut Tape, f: Var, p_s: usize, tau_s: f64) -> Result<Var> {
    if !(tau_s > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let s = cosine_similarity(tape, f, f)?;
    let split = split_similarity(tape, s, p_s)?;
    let scaled = tape.scale(s, 1.0 / tau_s)?;
    let neg = tape.logsumexp_rows_masked(scaled, &split.excluded)?;
    row_mean(tape, neg)
}

/// Averages of the two cross directions and of the two self terms.
pub fn bidirectional_contrastive(tape: &mut Tape, fx: Var, fy: Var, cfg: &LossConfig) -> Result<(Var, Var)> {
    Ok((
        bidirectional_cross(tape, fx, fy, cfg)?,
        bidirectional_self(tape, fx, fy, cfg)?,
    ))
}

pub fn bidirectional_cross(tape: &mut Tape, fx: Var, fy: Var, cfg: &LossConfig) -> Result<Var> {
    let sxy = cosine_similarity(tape, fx, fy)?;
    let syx = tape.transpose(sxy)?;
    let split_xy = split_similarity(tape, sxy, cfg.p_c)?;
    let split_yx = split_similarity(tape, syx, cfg.p_c)?;
    let a = cross_loss(tape, &split_xy, cfg.tau_c)?;
    let b = cross_loss(tape, &split_yx, cfg.tau_c)?;
    let sum = tape.add(a, b)?;
    tape.scale(sum, 0.5)
}

pub fn bidirectional_self(tape: &mut Tape, fx: Var, fy: Var, cfg: &LossConfig) -> Result<Var> {
    let a = self_loss(tape, fx, cfg.p_s, cfg.tau_s)?;
    let b = self_loss(tape, fy, cfg.p_s, cfg.tau_s)?;
    let sum = tape.add(a, b)?;
    tape.scale(sum, 0.5)
}
