//! Synthetic near-isometric shape pairs with identity ground truth.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{PairEntry, PairManifest, Role};
use crate::mesh::{norm, sub, write_correspondence, write_mesh, Correspondence, Mesh};
use crate::shapes::{cylinder, uv_sphere};

/// Per-edge length ratio bound between source and target.
pub const MAX_EDGE_DISTORTION: f64 = 0.15;
pub const MIN_RESOLUTION: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BentCylinder,
    BumpySphere,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::BentCylinder => "bent_cylinder",
            Family::BumpySphere => "bumpy_sphere",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bent_cylinder" => Ok(Family::BentCylinder),
            "bumpy_sphere" => Ok(Family::BumpySphere),
            other => Err(Error::invalid(format!("unknown shape family {other:?}"))),
        }
    }
}

/// Deformation strength. Zero leaves the target equal to the source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformParams {
    /// Total bend of the cylinder axis, radians (bent cylinder).
    pub bend_angle: f64,
    /// Relative change of each bump's amplitude (bumpy sphere).
    pub bump_scale: f64,
}

/// Largest `|len_target / len_source - 1|` over all edges.
pub fn edge_distortion(source: &Mesh, target: &Mesh) -> Result<f64> {
    if source.triangles() != target.triangles() {
        return Err(Error::invalid("meshes do not share connectivity"));
    }
    let (vs, vt) = (source.vertices(), target.vertices());
    Ok(source
        .edges()
        .iter()
        .map(|&(a, b)| (norm(sub(vt[a], vt[b])) / norm(sub(vs[a], vs[b])) - 1.0).abs())
        .fold(0.0, f64::max))
}

/// Source mesh, deformed target with the same connectivity, and the
/// identity ground-truth map. Vertex counts approximate `resolution`.
pub fn synth_pair(
    family: Family,
    resolution: usize,
    params: &DeformParams,
    seed: u64,
) -> Result<(Mesh, Mesh, Correspondence)> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::invalid(format!(
            "resolution {resolution} is below the minimum of {MIN_RESOLUTION}"
        )));
    }
    if !params.bend_angle.is_finite() || !params.bump_scale.is_finite() || params.bump_scale < 0.0 {
        return Err(Error::invalid("deformation parameters must be finite, bump scale nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut source, mut target) = match family {
        Family::BentCylinder => bent_cylinder(resolution, params.bend_angle, &mut rng)?,
        Family::BumpySphere => bumpy_sphere(resolution, params.bump_scale, &mut rng)?,
    };
    let distortion = edge_distortion(&source, &target)?;
    if distortion > MAX_EDGE_DISTORTION {
        return Err(Error::invalid(format!(
            "deformation stretches an edge by {:.1}%, above the {:.0}% bound",
            distortion * 100.0,
            MAX_EDGE_DISTORTION * 100.0
        )));
    }
    source.name = format!("{}-s{seed}-a", family.as_str());
    target.name = format!("{}-s{seed}-b", family.as_str());
    let gt = Correspondence::identity(source.n_vertices(), &source.name, &target.name);
    Ok((source, target, gt))
}

struct Bump {
    center: [f64; 2],
    amplitude: f64,
    width: f64,
}

fn bent_cylinder(resolution: usize, bend: f64, rng: &mut ChaCha8Rng) -> Result<(Mesh, Mesh)> {
    let (radius, length) = (0.25, 3.0);
    let circumference = 2.0 * PI * radius;
    let spacing = (circumference * length / resolution as f64).sqrt();
    let segments = ((circumference / spacing).round() as usize).max(6);
    let rings = (resolution / segments).max(3);
    let base = cylinder(rings, segments, 1.0, length);
    // bumps in (arc length around, height) coordinates
    let bumps: Vec<Bump> = (0..7)
        .map(|_| Bump {
            center: [rng.random_range(0.0..circumference), rng.random_range(0.3..length - 0.3)],
            amplitude: rng.random_range(0.4..0.8),
            width: rng.random_range(0.12..0.25),
        })
        .collect();
    let taper = rng.random_range(0.1..0.3);
    let plane = rng.random_range(0.0..2.0 * PI);
    let bend = bend * rng.random_range(0.8..1.2);
    let shape = |p: [f64; 3]| {
        let phi = p[1].atan2(p[0]);
        let (u, z) = (phi.rem_euclid(2.0 * PI) * radius, p[2]);
        let mut r = radius * (1.0 + taper * z / length);
        for b in &bumps {
            let du = (u - b.center[0]).abs();
            let du = du.min(circumference - du);
            let d2 = du * du + (z - b.center[1]).powi(2);
            r += radius * b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp();
        }
        [r * phi.cos(), r * phi.sin(), z]
    };
    let source = base.map_vertices(shape)?;
    let target = if bend == 0.0 {
        source.clone()
    } else {
        let rho = length / bend;
        let (c, s) = (plane.cos(), plane.sin());
        source.map_vertices(|p| {
            // coordinate along the bending direction, then wrap the axis
            // around an arc of radius rho
            let a = p[0] * c + p[1] * s;
            let o = -p[0] * s + p[1] * c;
            let theta = p[2] / rho;
            let a2 = rho - (rho - a) * theta.cos();
            let z2 = (rho - a) * theta.sin();
            [a2 * c - o * s, a2 * s + o * c, z2]
        })?
    };
    Ok((source, target))
}

fn bumpy_sphere(resolution: usize, bump_scale: f64, rng: &mut ChaCha8Rng) -> Result<(Mesh, Mesh)> {
    let rings = (((resolution as f64) / 2.0).sqrt().round() as usize).max(4);
    let segments = ((resolution - 2) / rings).max(6);
    let base = uv_sphere(rings, segments);
    let bumps: Vec<([f64; 3], f64, f64)> = (0..9)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            let amp = rng.random_range(0.15..0.3) * if rng.random_bool(0.25) { -1.0 } else { 1.0 };
            ([s * t.cos(), s * t.sin(), z], amp, rng.random_range(0.25..0.45))
        })
        .collect();
    let stretch = [1.0, rng.random_range(0.8..0.95), rng.random_range(1.05..1.25)];
    let jitter: Vec<f64> = bumps.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    let shape = |scale: f64| {
        let bumps = &bumps;
        let jitter = &jitter;
        move |p: [f64; 3]| {
            let mut r = 1.0;
            for ((c, amp, width), j) in bumps.iter().zip(jitter) {
                let cos = (p[0] * c[0] + p[1] * c[1] + p[2] * c[2]).clamp(-1.0, 1.0);
                let ang = cos.acos();
                r += amp * (1.0 + scale * j) * (-ang * ang / (2.0 * width * width)).exp();
            }
            [r * p[0] * stretch[0], r * p[1] * stretch[1], r * p[2] * stretch[2]]
        }
    };
    let source = base.map_vertices(shape(0.0))?;
    let target = if bump_scale == 0.0 {
        source.clone()
    } else {
        base.map_vertices(shape(bump_scale))?
    };
    Ok((source, target))
}

/// Layout of a generated train/test dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthDatasetConfig {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub resolution: usize,
    pub deform: DeformParams,
    /// Pair `i` of the training split uses seed `seed + i`; test pairs use
    /// `seed + TEST_SEED_OFFSET + i`.
    pub seed: u64,
}

pub const TEST_SEED_OFFSET: u64 = 1000;

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        SynthDatasetConfig {
            train_pairs: 8,
            test_pairs: 4,
            resolution: 500,
            deform: DeformParams {
                bend_angle: 0.6,
                bump_scale: 0.3,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub family: Family,
    pub source: Mesh,
    pub target: Mesh,
    pub gt: Correspondence,
}

fn family_for(i: usize) -> Family {
    if i % 2 == 0 {
        Family::BentCylinder
    } else {
        Family::BumpySphere
    }
}

/// Training and test pairs; families alternate, cylinders first.
pub fn generate_dataset(cfg: &SynthDatasetConfig) -> Result<(Vec<SynthSample>, Vec<SynthSample>)> {
    let split = |count: usize, offset: u64| -> Result<Vec<SynthSample>> {
        (0..count)
            .map(|i| {
                let family = family_for(i);
                let (source, target, gt) = synth_pair(family, cfg.resolution, &cfg.deform, cfg.seed + offset + i as u64)?;
                Ok(SynthSample {
                    family,
                    source,
                    target,
                    gt,
                })
            })
            .collect()
    };
    Ok((split(cfg.train_pairs, 0)?, split(cfg.test_pairs, TEST_SEED_OFFSET)?))
}

/// Writes `meshes/*.off`, `gt/*.txt`, `train.json` and `test.json` under
/// `dir` and returns the two manifest paths.
pub fn write_dataset(dir: &Path, cfg: &SynthDatasetConfig) -> Result<(PathBuf, PathBuf)> {
    let (train, test) = generate_dataset(cfg)?;
    for sub in ["meshes", "gt"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut paths = Vec::new();
    for (samples, role, file) in [(&train, Role::Train, "train.json"), (&test, Role::Test, "test.json")] {
        let mut pairs = Vec::new();
        for s in samples {
            let src = PathBuf::from("meshes").join(format!("{}.off", s.source.name));
            let tgt = PathBuf::from("meshes").join(format!("{}.off", s.target.name));
            let gt = PathBuf::from("gt").join(format!("{}__{}.txt", s.source.name, s.target.name));
            write_mesh(dir.join(&src), &s.source)?;
            write_mesh(dir.join(&tgt), &s.target)?;
            write_correspondence(dir.join(&gt), &s.gt)?;
            pairs.push(PairEntry {
                source: src,
                target: tgt,
                gt: Some(gt),
            });
        }
        let path = dir.join(file);
        PairManifest { pairs, role }.save(&path)?;
        paths.push(path);
    }
    Ok((paths[0].clone(), paths[1].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in [Family::BentCylinder, Family::BumpySphere] {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("torus".parse::<Family>().is_err());
    }
}
