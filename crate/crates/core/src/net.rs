//! Per-vertex feature extractor: a linear lift of HKS descriptors followed by
//! residual blocks of learned spectral heat diffusion and a pointwise MLP.
//!
//! Unlike full DiffusionNet there is no spatial-gradient branch, so features
//! are isotropic.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::spectral::{HksScaling, SpectralOperators};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub in_dim: usize,
    pub width: usize,
    pub blocks: usize,
    /// Initial diffusion times are log-spaced over this range across channels.
    pub init_time_min: f64,
    pub init_time_max: f64,
    /// Rescaling of the HKS input columns; part of the model because
    /// inference must match training.
    pub hks_scaling: HksScaling,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            in_dim: 16,
            width: 128,
            blocks: 4,
            init_time_min: 1e-3,
            init_time_max: 1e-1,
            hks_scaling: HksScaling::default(),
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.width == 0 {
            return Err(Error::invalid("network widths must be positive"));
        }
        if self.blocks == 0 {
            return Err(Error::invalid("network needs at least one block"));
        }
        if !(self.init_time_min > 0.0 && self.init_time_min <= self.init_time_max) {
            return Err(Error::invalid("initial diffusion time range must be positive and ordered"));
        }
        Ok(())
    }

    /// Parameter count implied by the architecture.
    pub fn parameter_count(&self) -> usize {
        let w = self.width;
        (self.in_dim * w + w) + self.blocks * (w + 2 * (w * w + w))
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub config: NetConfig,
    pub tensors: Vec<(String, Mat)>,
}

fn inverse_softplus(t: f64) -> f64 {
    t.exp_m1().ln()
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Seeded initialization: weights uniform in `+-1/sqrt(fan_in)`, zero
/// biases, diffusion times log-spaced over the configured range.
pub fn init_params(config: &NetConfig, seed: u64) -> Result<NetParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = config.width;
    let mut tensors = Vec::new();
    let mut linear = |name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Mat::from_fn(fan_in, fan_out, |_, _| rng.random_range(-bound..bound));
        tensors.push((format!("{name}.weight"), weight));
        tensors.push((format!("{name}.bias"), Mat::zeros(1, fan_out)));
    };
    linear("lift", config.in_dim, w, &mut rng);
    let (lo, hi) = (config.init_time_min.ln(), config.init_time_max.ln());
    let times = Mat::from_fn(1, w, |_, c| {
        let s = if w == 1 { 0.0 } else { c as f64 / (w - 1) as f64 };
        inverse_softplus((lo + s * (hi - lo)).exp())
    });
    let mut block_tensors = Vec::new();
    for b in 0..config.blocks {
        block_tensors.push((format!("block{b}.time"), times.clone()));
        let mut lin = |name: String, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (w as f64).sqrt();
            block_tensors.push((
                format!("{name}.weight"),
                Mat::from_fn(w, w, |_, _| rng.random_range(-bound..bound)),
            ));
            block_tensors.push((format!("{name}.bias"), Mat::zeros(1, w)));
        };
        lin(format!("block{b}.lin1"), &mut rng);
        lin(format!("block{b}.lin2"), &mut rng);
    }
    tensors.extend(block_tensors);
    Ok(NetParams {
        config: config.clone(),
        tensors,
    })
}

impl NetParams {
    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Effective (softplus-mapped) diffusion times of every block.
    pub fn diffusion_times(&self) -> Vec<Vec<f64>> {
        (0..self.config.blocks)
            .filter_map(|b| self.get(&format!("block{b}.time")))
            .map(|t| t.iter().map(|&x| softplus(x)).collect())
            .collect()
    }

    /// Records every tensor as a tape leaf (or constant when `trainable` is false).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundParams> {
        let mut vars = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let v = if trainable {
                tape.leaf(t.clone())?
            } else {
                tape.constant(t.clone())?
            };
            vars.push((name.clone(), v));
        }
        Ok(BoundParams {
            config: self.config.clone(),
            vars,
        })
    }

    pub fn save(&self, path: &Path, meta: &CheckpointMeta) -> Result<()> {
        let mut header = serde_json::Map::new();
        header.insert("format_version".into(), CHECKPOINT_FORMAT_VERSION.into());
        header.insert("config".into(), serde_json::to_value(&self.config)?);
        header.insert("seed".into(), meta.seed.into());
        header.insert("epoch".into(), meta.epoch.into());
        if let Some(k) = meta.spectral_k {
            header.insert("spectral_k".into(), k.into());
        }
        let mut c = Container::new(header);
        for (name, t) in &self.tensors {
            c.push(name.clone(), t.clone());
        }
        c.write(path)
    }

    /// Loads a checkpoint; with `expected`, the stored config must match it.
    pub fn load(path: &Path, expected: Option<&NetConfig>) -> Result<(NetParams, CheckpointMeta)> {
        let c = Container::read(path)?;
        let version = c.header.get("format_version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_FORMAT_VERSION as u64) {
            return Err(Error::Container(format!("unsupported checkpoint version {version:?}")));
        }
        let config: NetConfig = serde_json::from_value(
            c.header
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Container("checkpoint lacks config".into()))?,
        )?;
        if let Some(exp) = expected {
            if exp != &config {
                return Err(Error::ConfigMismatch(format!(
                    "checkpoint network {config:?} differs from requested {exp:?}"
                )));
            }
        }
        let meta = CheckpointMeta {
            seed: c.header.get("seed").and_then(|v| v.as_u64()).unwrap_or(0),
            epoch: c.header.get("epoch").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
            spectral_k: c.header.get("spectral_k").and_then(|v| v.as_u64()).map(|k| k as usize),
        };
        let template = init_params(&config, 0)?;
        let mut tensors = Vec::with_capacity(template.tensors.len());
        for (name, t) in &template.tensors {
            let stored = c.get(name)?;
            if stored.shape() != t.shape() {
                return Err(Error::ConfigMismatch(format!("tensor {name} has shape {:?}", stored.shape())));
            }
            tensors.push((name.clone(), stored.clone()));
        }
        Ok((NetParams { config, tensors }, meta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: usize,
    /// Eigenbasis size the parameters were trained with, if uniform.
    pub spectral_k: Option<usize>,
}

/// Parameter tensors recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub config: NetConfig,
    pub vars: Vec<(String, Var)>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    /// Gradients of every parameter in declaration order (zeros where unreached).
    pub fn grads(&self, tape: &Tape) -> Vec<Mat> {
        self.vars
            .iter()
            .map(|(_, v)| {
                tape.grad(*v).cloned().unwrap_or_else(|| {
                    let (r, c) = tape.shape(*v);
                    Mat::zeros(r, c)
                })
            })
            .collect()
    }
}

/// Learned per-vertex features of one shape.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub values: Var,
    pub shape_name: String,
}

/// Spectral heat diffusion of each column `j` for time `t_j`:
/// `Phi diag(exp(-Lambda t_j)) Phi^T A F[:, j]`. `times` is a `1 x c` node.
pub fn diffuse(tape: &mut Tape, f: Var, ops: &SpectralOperators, times: Var) -> Result<Var> {
    let (_, c) = tape.shape(f);
    if tape.shape(times) != (1, c) {
        return Err(Error::ShapeMismatch {
            op: "diffuse",
            lhs: tape.shape(f),
            rhs: tape.shape(times),
        });
    }
    let spectral = tape.left_mul_const(ops.phi_pinv.clone(), f)?;
    let lambda = tape.constant(DMatrix::from_column_slice(ops.k(), 1, ops.lambda.as_slice()))?;
    let exponent = tape.matmul(lambda, times)?;
    let exponent = tape.scale(exponent, -1.0)?;
    let decay = tape.exp(exponent)?;
    let damped = tape.hadamard(spectral, decay)?;
    tape.left_mul_const(ops.phi.clone(), damped)
}

fn linear(tape: &mut Tape, x: Var, weight: Var, bias: Var, ones: Var) -> Result<Var> {
    let xw = tape.matmul(x, weight)?;
    let b = tape.matmul(ones, bias)?;
    tape.add(xw, b)
}

fn tag_block<T>(r: Result<T>, block: &str) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { op } => Error::NonFinite {
            op: format!("{block}: {op}"),
        },
        other => other,
    })
}

/// Runs the network on one shape's HKS descriptors (`|V| x in_dim`).
pub fn forward(
    tape: &mut Tape,
    params: &BoundParams,
    hks: &Mat,
    ops: &SpectralOperators,
    shape_name: &str,
) -> Result<FeatureMatrix> {
    let cfg = &params.config;
    if hks.ncols() != cfg.in_dim || hks.nrows() != ops.n_vertices() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            lhs: hks.shape(),
            rhs: (ops.n_vertices(), cfg.in_dim),
        });
    }
    let n = hks.nrows();
    let input = tag_block(tape.constant(hks.clone()), "input")?;
    let ones = tape.constant(Mat::from_element(n, 1, 1.0))?;
    let mut x = tag_block(
        linear(tape, input, params.var("lift.weight")?, params.var("lift.bias")?, ones),
        "lift",
    )?;
    for b in 0..cfg.blocks {
        let name = format!("block {b}");
        let step = |tape: &mut Tape| -> Result<Var> {
            let raw = params.var(&format!("block{b}.time"))?;
            let t = tape.softplus(raw)?;
            let d = diffuse(tape, x, ops, t)?;
            let h = linear(
                tape,
                d,
                params.var(&format!("block{b}.lin1.weight"))?,
                params.var(&format!("block{b}.lin1.bias"))?,
                ones,
            )?;
            let h = tape.relu(h)?;
            let h = linear(
                tape,
                h,
                params.var(&format!("block{b}.lin2.weight"))?,
                params.var(&format!("block{b}.lin2.bias"))?,
                ones,
            )?;
            tape.add(x, h)
        };
        x = tag_block(step(tape), &name)?;
    }
    Ok(FeatureMatrix {
        values: x,
        shape_name: shape_name.to_string(),
    })
}

/// Feature values for one shape without keeping a tape around.
pub fn compute_features(params: &NetParams, hks: &Mat, ops: &SpectralOperators) -> Result<Mat> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false)?;
    let f = forward(&mut tape, &bound, hks, ops, "")?;
    Ok(tape.value(f.values).clone())
}

/// Shared handle so several tapes can read one parameter snapshot.
pub type SharedParams = Arc<NetParams>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count_is_pinned() {
        let cfg = NetConfig::default();
        // (16*128 + 128) + 4 * (128 + 2 * (128*128 + 128))
        assert_eq!(cfg.parameter_count(), 2176 + 4 * (128 + 2 * 16512));
        assert_eq!(cfg.parameter_count(), 134_784);
        let p = init_params(&cfg, 1).unwrap();
        assert_eq!(p.parameter_count(), 134_784);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = NetConfig::default();
        let a = init_params(&cfg, 7).unwrap();
        let b = init_params(&cfg, 7).unwrap();
        let c = init_params(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_blocks_rejected() {
        let cfg = NetConfig {
            blocks: 0,
            ..NetConfig::default()
        };
        assert!(init_params(&cfg, 0).is_err());
    }

    #[test]
    fn init_times_span_range() {
        let p = init_params(&NetConfig::default(), 0).unwrap();
        let times = p.diffusion_times();
        assert_eq!(times.len(), 4);
        assert!((times[0][0] - 1e-3).abs() < 1e-12);
        assert!((times[0][127] - 1e-1).abs() < 1e-12);
        assert!(times[0].windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn weights_within_fan_in_bound() {
        let p = init_params(&NetConfig::default(), 3).unwrap();
        assert!(p.get("lift.weight").unwrap().amax() <= 0.25);
        assert!(p.get("block0.lin1.weight").unwrap().amax() <= 1.0 / 128f64.sqrt());
        assert_eq!(p.get("block2.lin2.bias").unwrap().amax(), 0.0);
    }
}
