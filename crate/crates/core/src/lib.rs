//! Metric-graph machinery for low-distortion embeddings into `ℓ^p` spaces.
//!
//! The crate builds finite fixtures (Cayley balls of model groups, paths,
//! cycles, edge-list files), computes hyperbolicity constants, and constructs
//! three families of coarse embeddings with sparse `ℓ^p` images:
//!
//! * scale-averaged "trumpet" embeddings of hyperbolic graphs,
//! * piece/tree splittings of tree-graded graphs,
//! * the small/large-piece embedding of relatively hyperbolic graphs,
//!
//! together with the quantitative lemma checks (summation inequalities,
//! geodesic stability, bi-Lipschitz bounds, boundary-set counting) that the
//! constructions rest on, and distortion/compression measurement over finite
//! balls.

pub mod distortion;
pub mod error;
pub mod func;
pub mod graph;
pub mod halfint;
pub mod hyp_embed;
pub mod hyperbolicity;
pub mod lp;
pub mod pieces;
pub mod psi;
pub mod relhyp;
pub mod tree_graded;
pub mod word;

pub use error::CoreError;
pub use graph::{GeodesicDag, MetricGraph};
pub use halfint::HalfInt;
pub use lp::{CoordLabel, LpVector};
