//! Extreme multi-class linear SVMs trained by stochastic subgradient descent
//! where the most violating class of each example is found with a
//! maximum-inner-product-search index instead of a full scan.
//!
//! * [`sparse`] and [`weights`]: sparse vectors and the lazily scaled
//!   per-class weight matrix.
//! * [`margin`]: exact and index-backed margins, hinge loss, empirical risk.
//! * [`mips`]: exact, SimpleLSH and SW-Graph search backends plus the
//!   inexactness audit.
//! * [`train`]: the ℓ2 and ℓ1 trainers.
//! * [`eval`]: prediction, accuracy and macro-F1.
//! * [`data`], [`model_io`], [`cli`]: file formats and the command line.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod margin;
pub mod mips;
pub mod model_io;
pub mod sparse;
pub mod synth;
pub mod train;
pub mod weights;

pub use data::{Dataset, Example, LabelMap};
pub use error::{Error, Result};
pub use sparse::SparseVector;
pub use weights::WeightMatrix;
