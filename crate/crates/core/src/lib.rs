//! Stiffness matrices of second-order elliptic problems on shape-regular
//! (possibly graded) triangular meshes, and blockwise low-rank compression
//! of their inverses in the hierarchical matrix format.
//!
//! The crate is organized along the pipeline of the compression experiment:
//!
//! * [`mesh`] — triangulations of the unit square and the L-shaped domain,
//!   uniform or algebraically graded towards a point set, together with the
//!   incenter metric, cluster diameters/distances, inflation and patches.
//! * [`fem`] — P1 Galerkin assembly with homogeneous Dirichlet conditions,
//!   the single-element dual system biorthogonal to the hat basis, and the
//!   coordinate mappings connecting coefficient vectors and functions.
//! * [`clustering`] — geometrically balanced cluster trees over the DOF
//!   indices and the derived admissible block partition.
//! * [`hmatrix`] — dense inversion, blockwise truncated SVD, the computable
//!   spectral error bound, matrix-vector products and memory accounting.
//! * [`theory`] — executable checks of the structural machinery behind the
//!   rank decay: Clément averaging, discrete cut-off functions/operators,
//!   inverse inequality, locally discrete harmonic spaces and the discrete
//!   Caccioppoli inequality.

pub mod clustering;
pub mod error;
pub mod fem;
pub mod hmatrix;
pub mod mesh;
pub mod theory;
pub mod util;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
