//! Discrete Laplace-Beltrami operators, truncated eigenbases and HKS
//! descriptors.

mod cache;
mod eigen;
mod hks;
mod laplacian;
mod sparse;

pub use cache::{load_spectra, read_spectra, save_spectra, spectra_cache_path, SpectraHeader};
pub use eigen::{eig_k, fix_signs, EigOptions, InvariantReport, SpectralOperators};
pub use hks::{hks, hks_raw, hks_times, HksScaling};
pub use laplacian::{cotan_laplacian, lumped_mass, COT_CLAMP};
pub use sparse::{reverse_cuthill_mckee, EnvelopeCholesky, SparseSym};

use crate::error::Result;
use crate::mesh::Mesh;

/// Laplacian, mass and `k` eigenpairs of a mesh in one call.
pub fn compute_spectra(mesh: &Mesh, k: usize, opts: &EigOptions) -> Result<SpectralOperators> {
    let l = cotan_laplacian(mesh);
    let mass = lumped_mass(mesh);
    eig_k(&l, &mass, k, opts)
}
