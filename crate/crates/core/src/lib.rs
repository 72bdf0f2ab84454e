//! Semi-supervised linear discriminant analysis.
//!
//! Supervised two-class LDA plus four semi-supervised fitters (self-learning,
//! expectation maximization, moment-constrained and implicitly constrained),
//! data handling for synthetic and delimited-text datasets, and an experiment
//! harness for cross-validation and learning-curve studies.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod error;
pub mod lda;
pub mod numkit;
pub mod rng;
pub mod selfcheck;
pub mod semisup;

pub use error::{Error, Result};
pub use lda::{Class, ModelParams, SoftLabels};
pub use numkit::{Matrix, SymMatrix, Vector};
pub use semisup::{FitConfig, FitTrace, Method};
