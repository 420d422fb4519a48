//! End-to-end procedures: leave-one-out cross-validation, stepwise feature
//! elimination and the bound tightness study.

mod approx;
mod loocv;
mod stepwise;
mod tightness;

pub use approx::{loocv_approx, sherman_morrison_update, ApproxLoocv};
pub use loocv::{loocv_glru, loocv_naive, FoldOutcome, FoldStatus, LoocvConfig, LoocvReport};
pub use stepwise::{
    stepwise_glru, stepwise_naive, CandidateReport, StepReport, StepwiseConfig, StepwiseReport,
};
pub use tightness::{tightness_study, ModKind, TightnessConfig, TightnessRow};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Sign with `sign(0) = +1`.
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Number of instances with `y_i ≠ sign(X_i w)`.
pub fn error_count(ds: &Dataset, w: &[f64]) -> usize {
    (0..ds.n())
        .filter(|&i| sign(ds.row(i).dot(w)) != ds.y()[i])
        .count()
}

/// Runs `f` inside a pool of `threads` workers, or the global pool.
pub(crate) fn in_pool<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("thread count must be positive".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub(crate) fn training_error(context: String, source: Error) -> Error {
    Error::Training {
        context,
        source: Box::new(source),
    }
}
