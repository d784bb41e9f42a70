//! Adam training over shape pairs.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::contrastive::{bidirectional_cross, bidirectional_self, LossConfig};
use crate::error::{Error, Result};
use crate::eval::PairManifest;
use crate::fmap::{align_loss, baseline_losses, fmap_from_pmap, soft_map, total_loss, BaselineConfig, DEFAULT_ALPHA};
use crate::mesh::{load_mesh, Mesh};
use crate::net::{forward, init_params, CheckpointMeta, NetConfig, NetParams};
use crate::spectral::{hks, load_spectra, spectra_cache_path, SpectralOperators};
use crate::util::write_atomic;

pub const METRICS_HEADER: &str = "iter,pair,cross,self,align,total,grad_norm";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Which pairs one epoch visits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PairPolicy {
    /// The pairs listed in the dataset.
    #[default]
    Listed,
    /// Every ordered pair of distinct shapes.
    AllOrdered,
    /// A fresh random subset of all ordered pairs each epoch.
    Random { count: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub disable_cross: bool,
    pub disable_self: bool,
    /// Replace the alignment term by the classical bijectivity and
    /// orthogonality penalties on the projected maps.
    pub baseline_losses_mode: bool,
}

fn default_clip() -> Option<f64> {
    Some(10.0)
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_parallel() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub pairs: PairPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub baseline: BaselineConfig,
    /// Write a checkpoint every this many epochs.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: Option<f64>,
    /// Stop after this many iterations even mid-epoch.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Pairs evaluated concurrently per update. Above 1, gradients of the
    /// group are summed into one step and bit-stability is not guaranteed.
    #[serde(default = "default_parallel")]
    pub parallel_pairs: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            adam: AdamConfig::default(),
            pairs: PairPolicy::default(),
            seed: 0,
            loss: LossConfig::default(),
            alpha: DEFAULT_ALPHA,
            net: NetConfig::default(),
            ablation: Ablation::default(),
            baseline: BaselineConfig::default(),
            checkpoint_every: None,
            grad_clip: default_clip(),
            max_iterations: None,
            parallel_pairs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || !(self.adam.eps > 0.0) {
            return Err(Error::invalid("Adam betas must lie in [0, 1) and eps be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::invalid("gradient clip must be positive"));
        }
        if self.parallel_pairs == 0 || self.checkpoint_every == Some(0) {
            return Err(Error::invalid("parallel_pairs and checkpoint_every must be positive"));
        }
        if let PairPolicy::Random { count: 0 } = self.pairs {
            return Err(Error::invalid("random pair policy needs a positive count"));
        }
        self.loss.validate()?;
        self.baseline.validate()?;
        self.net.validate()
    }
}

/// Per-tensor Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(tensors: &[(String, Mat)]) -> Self {
        let zeros: Vec<Mat> = tensors.iter().map(|(_, t)| Mat::zeros(t.nrows(), t.ncols())).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    tensors: &mut [(String, Mat)],
    grads: &[Mat],
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != tensors.len() || state.m.len() != tensors.len() {
        return Err(Error::LengthMismatch {
            expected: tensors.len(),
            found: grads.len(),
        });
    }
    for ((name, t), g) in tensors.iter().zip(grads) {
        if t.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: t.shape(),
                rhs: g.shape(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                op: format!("gradient of {name}"),
            });
        }
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powf(state.step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(state.step as f64);
    for (i, ((_, t), g)) in tensors.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..t.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            t[j] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// A mesh with its spectral operators and HKS input descriptors.
#[derive(Debug, Clone)]
pub struct ShapeData {
    pub name: String,
    pub mesh: Mesh,
    pub ops: SpectralOperators,
    pub hks: Mat,
}

impl ShapeData {
    /// Computes HKS inputs with the width and scaling of `net`.
    pub fn new(mesh: Mesh, ops: SpectralOperators, net: &NetConfig) -> Result<ShapeData> {
        let hks = hks(&ops, net.in_dim, net.hks_scaling)?;
        Ok(ShapeData {
            name: mesh.name.clone(),
            mesh,
            ops,
            hks,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub shapes: Vec<ShapeData>,
    /// Listed (source, target) pairs as indices into `shapes`.
    pub pairs: Vec<(usize, usize)>,
}

impl Dataset {
    /// Loads every mesh of a manifest with its cached spectra, truncated to `k`.
    pub fn from_manifest(
        manifest: &PairManifest,
        cache_dir: &Path,
        k: usize,
        net: &NetConfig,
    ) -> Result<Dataset> {
        let paths = manifest.mesh_paths();
        let mut shapes = Vec::with_capacity(paths.len());
        for p in &paths {
            let mesh = load_mesh(p)?;
            let cache = find_cache(cache_dir, &mesh.name, k)?;
            let ops = load_spectra(&cache, &mesh)?;
            let ops = if ops.k() > k { ops.truncate(k)? } else { ops };
            shapes.push(ShapeData::new(mesh, ops, net)?);
        }
        let index = |f: &PathBuf| paths.iter().position(|p| p == f).expect("path collected above");
        let pairs = manifest
            .pairs
            .iter()
            .map(|e| (index(&e.source), index(&e.target)))
            .collect();
        Ok(Dataset { shapes, pairs })
    }

    pub fn all_ordered_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.shapes.len();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()
    }

    pub fn pair_name(&self, (a, b): (usize, usize)) -> String {
        format!("{}->{}", self.shapes[a].name, self.shapes[b].name)
    }
}

/// Cache for `name` with at least `k` eigenpairs: the exact `k` file first,
/// otherwise the smallest larger one.
pub fn find_cache(dir: &Path, name: &str, k: usize) -> Result<PathBuf> {
    let exact = spectra_cache_path(dir, name, k);
    if exact.exists() {
        return Ok(exact);
    }
    let prefix = format!("{name}.k");
    let mut best: Option<(usize, PathBuf)> = None;
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let file = e.file_name().to_string_lossy().into_owned();
            let Some(kk) = file
                .strip_prefix(&prefix)
                .and_then(|r| r.strip_suffix(".spectra"))
                .and_then(|r| r.parse::<usize>().ok())
            else {
                continue;
            };
            if kk >= k && best.as_ref().is_none_or(|(b, _)| kk < *b) {
                best = Some((kk, e.path()));
            }
        }
    }
    best.map(|(_, p)| p).ok_or(Error::MissingCache(exact))
}

/// Loss components of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub pair: String,
    pub cross: f64,
    #[serde(rename = "self")]
    pub self_: f64,
    pub align: f64,
    pub total: f64,
    pub grad_norm: f64,
}

pub fn metrics_csv(log: &[IterRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if log.is_empty() {
        w.write_record(METRICS_HEADER.split(','))
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    for r in log {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Scalar loss nodes of one pair.
#[derive(Debug, Clone, Copy)]
pub struct PairLosses {
    pub cross: Var,
    pub self_: Var,
    pub align: Var,
    pub total: Var,
}

/// Records the full training objective for one pair on `tape`.
pub fn pair_losses(
    tape: &mut Tape,
    fx: Var,
    fy: Var,
    x: &ShapeData,
    y: &ShapeData,
    cfg: &TrainConfig,
) -> Result<PairLosses> {
    let zero = || Mat::zeros(1, 1);
    let cross = if cfg.ablation.disable_cross {
        tape.constant(zero())?
    } else {
        bidirectional_cross(tape, fx, fy, &cfg.loss)?
    };
    let self_ = if cfg.ablation.disable_self {
        tape.constant(zero())?
    } else {
        bidirectional_self(tape, fx, fy, &cfg.loss)?
    };
    let pi_xy = soft_map(tape, fx, fy, cfg.alpha)?;
    let pi_yx = soft_map(tape, fy, fx, cfg.alpha)?;
    let c_yx = fmap_from_pmap(tape, &pi_xy, &x.ops, &y.ops)?;
    let c_xy = fmap_from_pmap(tape, &pi_yx, &y.ops, &x.ops)?;
    let align = if cfg.ablation.baseline_losses_mode {
        let (bi, or, _) = baseline_losses(tape, &c_xy, &c_yx, &pi_xy, &x.ops, &y.ops)?;
        let bi = tape.scale(bi, cfg.baseline.theta_bi)?;
        let or = tape.scale(or, cfg.baseline.theta_or)?;
        tape.add(bi, or)?
    } else {
        let a = align_loss(tape, &x.ops, &pi_xy, &y.ops, &c_yx)?;
        let b = align_loss(tape, &y.ops, &pi_yx, &x.ops, &c_xy)?;
        let s = tape.add(a, b)?;
        tape.scale(s, 0.5)?
    };
    let total = total_loss(tape, cross, self_, align, &cfg.loss)?;
    Ok(PairLosses {
        cross,
        self_,
        align,
        total,
    })
}

/// Loss values and parameter gradients of one pair.
#[derive(Debug, Clone)]
pub struct PairStep {
    pub cross: f64,
    pub self_: f64,
    pub align: f64,
    pub total: f64,
    pub grads: Vec<Mat>,
}

/// Forward and backward pass of the training objective on one pair.
pub fn pair_step(params: &NetParams, data: &Dataset, pair: (usize, usize), cfg: &TrainConfig) -> Result<PairStep> {
    let (x, y) = (&data.shapes[pair.0], &data.shapes[pair.1]);
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true)?;
    let fx = forward(&mut tape, &bound, &x.hks, &x.ops, &x.name)?;
    let fy = forward(&mut tape, &bound, &y.hks, &y.ops, &y.name)?;
    let l = pair_losses(&mut tape, fx.values, fy.values, x, y, cfg)?;
    tape.backward(l.total)?;
    Ok(PairStep {
        cross: tape.scalar(l.cross),
        self_: tape.scalar(l.self_),
        align: tape.scalar(l.align),
        total: tape.scalar(l.total),
        grads: bound.grads(&tape),
    })
}

/// Trained parameters plus the per-iteration log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub optimizer: OptimizerState,
    pub log: Vec<IterRecord>,
}

fn global_norm(grads: &[Mat]) -> f64 {
    grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
}

fn epoch_pairs(data: &Dataset, policy: PairPolicy, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut pairs = match policy {
        PairPolicy::Listed => data.pairs.clone(),
        PairPolicy::AllOrdered | PairPolicy::Random { .. } => data.all_ordered_pairs(),
    };
    pairs.shuffle(rng);
    if let PairPolicy::Random { count } = policy {
        pairs.truncate(count);
    }
    pairs
}

/// Runs the training loop. With `out_dir`, writes `metrics.csv`,
/// `model.ckpt` and any periodic checkpoints there.
pub fn train(data: &Dataset, cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.shapes.is_empty() || (cfg.pairs == PairPolicy::Listed && data.pairs.is_empty()) {
        return Err(Error::invalid("training set has no pairs"));
    }
    if let Some(s) = data.shapes.iter().find(|s| s.hks.ncols() != cfg.net.in_dim) {
        return Err(Error::ConfigMismatch(format!(
            "shape {} has {} HKS channels, network expects {}",
            s.name,
            s.hks.ncols(),
            cfg.net.in_dim
        )));
    }
    let k = data.shapes[0].ops.k();
    let meta = |epoch| CheckpointMeta {
        seed: cfg.seed,
        epoch,
        spectral_k: data.shapes.iter().all(|s| s.ops.k() == k).then_some(k),
    };
    let mut params = init_params(&cfg.net, cfg.seed)?;
    let mut state = OptimizerState::new(&params.tensors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1f);
    let mut log = Vec::new();
    let limit = cfg.max_iterations.unwrap_or(usize::MAX);
    'epochs: for epoch in 0..cfg.epochs {
        let pairs = epoch_pairs(data, cfg.pairs, &mut rng);
        for group in pairs.chunks(cfg.parallel_pairs) {
            if log.len() >= limit {
                break 'epochs;
            }
            let group = &group[..group.len().min(limit - log.len())];
            let results: Vec<Result<PairStep>> = if group.len() == 1 {
                vec![pair_step(&params, data, group[0], cfg)]
            } else {
                group.par_iter().map(|&p| pair_step(&params, data, p, cfg)).collect()
            };
            let mut grads: Option<Vec<Mat>> = None;
            let mut records = Vec::with_capacity(group.len());
            for (&pair, r) in group.iter().zip(results) {
                let r = r.map_err(|e| match e {
                    Error::NonFinite { op } => Error::NonFinite {
                        op: format!("pair {} at iteration {}: {op}", data.pair_name(pair), log.len() + records.len()),
                    },
                    other => other,
                })?;
                records.push((pair, r.cross, r.self_, r.align, r.total));
                match grads.as_mut() {
                    None => grads = Some(r.grads),
                    Some(acc) => acc.iter_mut().zip(&r.grads).for_each(|(a, g)| *a += g),
                }
            }
            let mut grads = grads.expect("group is nonempty");
            let norm = global_norm(&grads);
            if let Some(clip) = cfg.grad_clip {
                if norm > clip {
                    let s = clip / norm;
                    grads.iter_mut().for_each(|g| *g *= s);
                }
            }
            adam_step(&mut params.tensors, &grads, &mut state, &cfg.adam)?;
            for (pair, cross, self_, align, total) in records {
                log::debug!("iter {} {} total {total:.6}", log.len(), data.pair_name(pair));
                log.push(IterRecord {
                    iter: log.len(),
                    pair: data.pair_name(pair),
                    cross,
                    self_,
                    align,
                    total,
                    grad_norm: norm,
                });
            }
        }
        if params.diffusion_times().iter().flatten().any(|&t| !(t > 0.0)) {
            return Err(Error::NonFinite {
                op: format!("diffusion time collapsed to zero after epoch {epoch}"),
            });
        }
        if let (Some(dir), Some(every)) = (out_dir, cfg.checkpoint_every) {
            if (epoch + 1) % every == 0 {
                params.save(&dir.join(format!("checkpoint-epoch{:04}.ckpt", epoch + 1)), &meta(epoch + 1))?;
            }
        }
    }
    if let Some(dir) = out_dir {
        params.save(&dir.join("model.ckpt"), &meta(cfg.epochs))?;
        write_atomic(&dir.join("metrics.csv"), metrics_csv(&log)?.as_bytes())?;
    }
    Ok(TrainOutcome {
        params,
        optimizer: state,
        log,
    })
}

/// Hard correspondence from `x` to `y` under trained parameters.
pub fn predict(params: &NetParams, x: &ShapeData, y: &ShapeData, alpha: f64) -> Result<crate::mesh::Correspondence> {
    let fx = crate::net::compute_features(params, &x.hks, &x.ops)?;
    let fy = crate::net::compute_features(params, &y.hks, &y.ops)?;
    let (mut corr, _, _) = crate::fmap::match_features(&fx, &fy, &x.ops, &y.ops, alpha)?;
    corr.source_name = x.name.clone();
    corr.target_name = y.name.clone();
    Ok(corr)
}
