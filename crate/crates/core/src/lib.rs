//! Estimation of multiple smooth decision boundaries from pairwise
//! similar/dissimilar data.
//!
//! The pipeline: a ground-truth partition of the unit cube defined by smooth
//! threshold boundaries ([`partition`]) induces a pairwise binary
//! classification distribution ([`pairgen`]). A ReLU network with a softmax
//! head maps covariates into a regular simplex ([`simplex`], [`simplexnet`])
//! and is trained by minimizing an empirical contrastive hinge risk
//! ([`contrastive`], [`erm`]). Estimates are scored against the ground truth
//! with L² and misclassification risk functionals ([`evaluation`]), and
//! [`harness`] orchestrates reproducible convergence-rate experiments on top.
//!
//! All randomized computations are driven by counter-based per-index RNG
//! streams ([`rng`]), so results are independent of evaluation order and of
//! the number of worker threads (see the `parallel` feature).

pub mod contrastive;
pub mod erm;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod pairgen;
pub mod par;
pub mod partition;
pub mod rng;
pub mod simplex;
pub mod simplexnet;

pub use contrastive::{ContrastiveTarget, SimplexMap};
pub use error::{Error, Result};
pub use pairgen::{GeneratorConfig, PairwiseDataset, PairwiseSample};
pub use partition::{BaseDensity, HolderBoundary, SmoothPartition};
pub use simplex::SimplexFrame;
pub use simplexnet::{MlpParams, SimplexNet};
