//! Hyperspectral unmixing with endmember bundles.
//!
//! The crate covers the whole batch pipeline:
//!
//! * [`model`]: images, dictionaries, group partitions, abundances.
//! * [`io`]: `csv`/`bin` matrix files and group files.
//! * [`prox`]: proximal and shrinkage operators for the sparsity penalties.
//! * [`solvers`]: ADMM solvers (FCLSU, L1, collaborative, group, elitist, fractional).
//! * [`bundles`]: bundle extraction (random subsets, VCA, spectral-angle k-means).
//! * [`simgen`]: synthetic scenes with full ground truth.
//! * [`metrics`]: abundance, endmember and reconstruction error measures.

pub mod bundles;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod prox;
pub mod simgen;
pub mod solvers;

pub use error::{HsiError, Result};
pub use model::{
    collapse_abundances, equivalent_endmembers, reconstruct, AbundanceMatrix, AbundanceMode,
    EndmemberDictionary, EquivalentEndmembers, GroupStructure, Penalty, SolverConfig,
    SpectralImage,
};
