//! Certified parameter regions for re-trained regularized linear models.
//!
//! Given the optimum of a regularized empirical risk minimization problem,
//! the crate bounds the optimum of a slightly modified problem (instances
//! or features added or removed) from a duality gap that costs time
//! proportional to the size of the modification. The bounds drive exact
//! leave-one-out cross-validation and stepwise feature elimination that
//! skip provably unnecessary retraining.

pub mod bounds;
pub mod convex;
pub mod data;
pub mod erm;
pub mod error;
pub mod gap;
pub mod synth;
pub mod workflows;

pub use error::{Error, Result};
