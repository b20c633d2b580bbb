//! Illicit-transaction classifiers over Elliptic-format transaction graphs.
//!
//! The crate covers the full experiment surface:
//!
//! - [`elliptic`]: loading the three-file Elliptic layout, per-time-step
//!   graph construction with symmetric adjacency normalization, temporal
//!   splits and label masking.
//! - [`dense`] / [`sparse`] / [`tape`] / [`optim`]: a dense matrix kernel
//!   set with reverse-mode differentiation and Adam, sized for per-time-step
//!   graph batches.
//! - [`gcn`] / [`cp`]: the two node classifiers, a two-branch GCN and its
//!   tensorized variant whose convolutions are CP-decomposed product-pooling
//!   layers.
//! - [`trainer`]: epoch loop with summed per-step losses, best-validation
//!   checkpoint retention and F2-maximizing threshold selection.
//! - [`tree`] / [`forest`]: decision trees, random forests and
//!   second-order gradient-boosted trees.
//! - [`qboost`]: ensemble subset selection through a QUBO objective solved
//!   exhaustively or by simulated annealing.
//! - [`metrics`] / [`results`] / [`pipeline`]: F-beta-centric evaluation,
//!   result documents and the end-to-end experiment runner behind the CLI.
//! - [`bundle`] / [`checkpoint`]: binary caching of parsed graphs and text
//!   serialization of trained parameters.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! pipeline itself runs in `f64`, and the crate root exposes the concrete
//! aliases it uses.

pub mod bundle;
pub mod checkpoint;
pub mod cp;
pub mod dense;
pub mod elliptic;
pub mod error;
pub mod forest;
pub mod gcn;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod qboost;
pub mod results;
pub mod scalar;
pub mod sparse;
pub mod tape;
pub mod trainer;
pub mod tree;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete matrix type used by the experiment pipeline.
pub type Mat = dense::Dense<f64>;
/// Single-precision matrix, for callers that trade accuracy for memory.
pub type Mat32 = dense::Dense<f32>;
/// Normalized adjacency as used by the pipeline.
pub type Adjacency = sparse::SparseSym<f64>;
/// Per-time-step graph as used by the pipeline.
pub type Graph = elliptic::TimeStepGraph<f64>;
/// Parameter store instantiated for the pipeline.
pub type Params = optim::ParameterStore<f64>;
