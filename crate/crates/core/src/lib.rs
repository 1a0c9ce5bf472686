//! Hierarchically semi-separable (HSS) matrices.
//!
//! The crate builds HSS representations from a matrix-free source (products
//! with blocks of vectors plus access to selected entries) using randomized
//! sampling with adaptive growth of the sample count. On top of the compressed
//! form it provides fast products, a ULV-like factorization and solver with
//! iterative refinement, and the planning side of a parallel implementation:
//! proportional mapping of the cluster tree onto process grids and an
//! analytic communication cost model.
//!
//! Index conventions: all intervals are zero-based and half-open, so the
//! one-based closed interval `[1, n]` used in the usual HSS notation is
//! `[0, n)` here.

pub mod compress;
pub mod dense;
mod error;
pub mod generators;
pub mod hss;
pub mod mapping;
pub mod matvec;
pub mod source;
pub mod tree;
pub mod ulv;

pub use compress::{compress, CompressionReport, SamplingConfig};
pub use dense::Matrix;
pub use error::{Error, Result};
pub use hss::{HssForm, PermutedBasis};
pub use source::{DenseSource, MatrixSource};
pub use tree::ClusterTree;
pub use ulv::{ulv_factor, ulv_solve, UlvFactors};
