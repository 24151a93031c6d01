//! Critical load restoration for unbalanced three-phase distribution networks.
//!
//! Restoration runs in two stages. The first picks a radial topology for each
//! target island (the minimum-diameter spanning tree). The second decides
//! which loads to pick up by repeatedly solving a semidefinite relaxation of
//! the mixed-integer restoration problem and fixing load statuses until the
//! relaxation returns an integral answer.

pub mod conic;
pub mod engine;
pub mod models;
pub mod netmodel;
pub mod oracle;
pub mod scalar;
pub mod topology;

// BLAS/LAPACK for the semidefinite cones
use openblas_src as _;

pub use scalar::{ConicScalar, Scalar};

/// Working precision of the concrete pipeline.
pub type Real = f64;
pub type IslandGraph = topology::IslandGraph<Real>;
pub type SpanningTree = topology::SpanningTree<Real>;
