//! Unsupervised contrastive spectral shape matching.
//!
//! Per-vertex features are learned on triangle meshes with cross- and
//! self-contrastive losses plus an alignment loss between a soft pointwise
//! map and the functional map obtained from it by spectral projection.
//! Dense correspondences are recovered by nearest-neighbour search between
//! aligned spectral embeddings.

pub mod autodiff;
pub mod container;
pub mod contrastive;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod fmap;
pub mod mesh;
pub mod method_map;
pub mod net;
pub mod shapes;
pub mod spectral;
pub mod synth;
pub mod train;
pub mod workload;
mod util;

pub use error::{Error, ErrorClass, Result};

/// Library version recorded in run provenance files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use mesh::{load_correspondence, load_mesh, total_area, write_correspondence, Correspondence, Mesh};
pub use spectral::{SparseSym, SpectralOperators};
pub use util::write_atomic;
