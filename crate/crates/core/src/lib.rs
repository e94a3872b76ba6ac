//! Knowledge graph embedding toolkit built around a translational score
//! function that restricts entities to relation-specific hyper-ellipsoids
//! and then translates between the mapped head and tail images:
//!
//! ```text
//! f_r(h, t) = gamma - || r_h ∘ (h/|h|) + b_r - r_t ∘ (t/|t|) ||_1
//! ```
//!
//! The TranSHER model carries all three relation components (`r_h`, `r_t`,
//! `b_r`). Two baselines share the same storage and scoring interface for
//! controlled comparison: PairRE (`b_r` fixed to zero) and TransE (a single
//! relation vector, entities still normalized).
//!
//! Modules:
//! - [`data`]: dataset loading, relation-type statistics, candidate lists
//! - [`model`]: parameter storage, scoring, analytic gradients, checkpoints
//! - [`init`]: gamma-uniform / Xavier-normal initialization and the
//!   8-combination initialization search
//! - [`train`]: negative sampling, self-adversarial loss, sparse Adam loop
//! - [`eval`]: filtered full-ranking and candidate-list ranking, MRR/HIT@N
//! - [`patterns`]: constructive checks of relation-pattern constraints
//! - [`analysis`]: translation heat maps, L1-norm histograms, gradient traces

// `Real as f64` casts are no-ops on the default build but real conversions
// under the f32 feature; negated float comparisons reject NaN on purpose.
#![allow(clippy::unnecessary_cast)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod eval;
pub mod init;
pub mod matrix;
pub mod model;
pub mod patterns;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

/// Scalar type used for all embedding arithmetic. 64-bit by default; the
/// `f32` feature trades precision for memory.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;
