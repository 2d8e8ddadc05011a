//! Incremental propensity score (IPS) effect curves.
//!
//! The IPS effect ψ(δ) is the mean outcome that would be observed if every unit's
//! odds of exposure were multiplied by δ. This crate estimates ψ over a grid of δ
//! with a cross-fitted, doubly robust influence-function estimator, attaches
//! pointwise Wald intervals and multiplier-bootstrap uniform bands, and ships a
//! simulation harness whose discrete data-generating processes have exactly
//! computable truth.

pub mod cli;
pub mod dataset;
pub mod digest;
pub mod estimator;
pub mod inference;
pub mod error;
pub mod learners;
pub mod pipeline;
pub mod seeding;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
