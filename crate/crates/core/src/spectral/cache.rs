use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spectral::SpectralOperators;

pub const SPECTRA_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraHeader {
    pub format_version: u32,
    pub mesh_name: String,
    pub n_vertices: usize,
    pub k: usize,
    pub vertex_hash: String,
}

/// Cache file location for a mesh: `<dir>/<mesh name>.k<k>.spectra`.
pub fn spectra_cache_path(dir: &Path, mesh_name: &str, k: usize) -> PathBuf {
    dir.join(format!("{mesh_name}.k{k}.spectra"))
}

pub fn save_spectra(path: &Path, mesh: &Mesh, ops: &SpectralOperators) -> Result<()> {
    let header = SpectraHeader {
        format_version: SPECTRA_FORMAT_VERSION,
        mesh_name: mesh.name.clone(),
        n_vertices: mesh.n_vertices(),
        k: ops.k(),
        vertex_hash: mesh.vertex_hash(),
    };
    let serde_json::Value::Object(map) = serde_json::to_value(&header)? else {
        unreachable!("header serializes to an object");
    };
    let mut c = Container::new(map);
    c.push("phi", (*ops.phi).clone());
    c.push("lambda", DMatrix::from_column_slice(1, ops.k(), ops.lambda.as_slice()));
    c.push("mass", DMatrix::from_column_slice(1, ops.n_vertices(), ops.mass.as_slice()));
    c.write(path)
}

/// Loads a cache file, verifying it was computed from exactly these vertices.
pub fn load_spectra(path: &Path, mesh: &Mesh) -> Result<SpectralOperators> {
    let (header, ops) = read_spectra(path)?;
    if header.vertex_hash != mesh.vertex_hash() || header.n_vertices != mesh.n_vertices() {
        return Err(Error::Container(format!(
            "{}: vertex hash mismatch for mesh {:?}",
            path.display(),
            mesh.name
        )));
    }
    Ok(ops)
}

/// Reads a cache file without checking it against a mesh.
pub fn read_spectra(path: &Path) -> Result<(SpectraHeader, SpectralOperators)> {
    let c = Container::read(path)?;
    let header: SpectraHeader = serde_json::from_value(serde_json::Value::Object(c.header.clone()))?;
    if header.format_version != SPECTRA_FORMAT_VERSION {
        return Err(Error::Container(format!(
            "unsupported spectra format version {}",
            header.format_version
        )));
    }
    let phi = c.get("phi")?.clone();
    let lambda = DVector::from_row_slice(c.get("lambda")?.as_slice());
    let mass = DVector::from_row_slice(c.get("mass")?.as_slice());
    if phi.shape() != (header.n_vertices, header.k) {
        return Err(Error::Container("phi shape disagrees with header".into()));
    }
    Ok((header, SpectralOperators::new(phi, lambda, mass)?))
}
