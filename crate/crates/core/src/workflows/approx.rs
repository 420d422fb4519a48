use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::loocv::{base_model, FoldOutcome, FoldStatus, LoocvConfig, LoocvReport};
use super::{in_pool, sign};
use crate::convex::{Interval, Loss, Regularizer};
use crate::data::{Dataset, SparseVecView, Task};
use crate::erm::TrainedModel;
use crate::error::{Error, Result};

/// `(A - s x xᵀ)⁻¹` from `A⁻¹`; `None` when the update is singular.
pub fn sherman_morrison_update(a_inv: &DMatrix<f64>, s: f64, x: &DVector<f64>) -> Option<DMatrix<f64>> {
    let u = a_inv * x;
    let denom = 1.0 - s * x.dot(&u);
    if !(denom.abs() > 1e-12) {
        return None;
    }
    Some(a_inv + (&u * u.transpose()) * (s / denom))
}

/// One-step Newton leave-one-out estimates around a full-data model.
///
/// With `H` the full-data Hessian at `w*`, the fold objective has Hessian
/// `H̃ - s x_i x_iᵀ` where `H̃ = n/(n-1) H - λ/(n-1) I` and
/// `s = ℓ''_i / (n-1)`. `H̃⁻¹` is factored once and each fold is a rank-one
/// correction.
#[derive(Debug, Clone)]
pub struct ApproxLoocv {
    h_tilde_inv: DMatrix<f64>,
    grad: DVector<f64>,
    w: DVector<f64>,
    curvature: Vec<f64>,
    slope: Vec<f64>,
    lambda: f64,
    n: f64,
    /// Whether the pseudo-inverse fallback was used.
    pub pseudo_inverse: bool,
}

impl ApproxLoocv {
    pub fn new(ds: &Dataset, model: &TrainedModel) -> Result<Self> {
        let reg = &model.reg;
        if !reg.is_plain_l2() {
            return Err(Error::Specialization(format!(
                "approximate LOOCV needs a plain L2 regularizer, got {}",
                reg.name()
            )));
        }
        let loss = &model.loss;
        let lambda = reg.strong_convexity();
        let d = ds.d();
        let n = ds.n() as f64;
        let xw = &model.cache.xw;
        let y = ds.y();
        let curvature: Vec<f64> = (0..ds.n()).map(|i| loss.second_derivative(y[i], xw[i])).collect();
        let slope: Vec<f64> = (0..ds.n()).map(|i| loss.derivative(y[i], xw[i])).collect();

        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut grad = DVector::<f64>::zeros(d);
        for i in 0..ds.n() {
            let row: Vec<(usize, f64)> = ds.row(i).iter().collect();
            for &(a, xa) in &row {
                grad[a] += slope[i] * xa / n;
                for &(b, xb) in &row {
                    h[(a, b)] += curvature[i] * xa * xb / n;
                }
            }
        }
        for j in 0..d {
            h[(j, j)] += lambda;
            grad[j] += lambda * model.w[j];
        }
        let h_tilde = h * (n / (n - 1.0)) - DMatrix::identity(d, d) * (lambda / (n - 1.0));
        let (h_tilde_inv, pseudo_inverse) = match h_tilde.clone().cholesky() {
            Some(c) => (c.inverse(), false),
            None => {
                log::warn!("fold Hessian is not positive definite, using a pseudo-inverse");
                let p = h_tilde
                    .pseudo_inverse(1e-12)
                    .map_err(|e| Error::Domain(format!("pseudo-inverse failed: {e}")))?;
                (p, true)
            }
        };
        Ok(ApproxLoocv {
            h_tilde_inv,
            grad,
            w: DVector::from_column_slice(&model.w),
            curvature,
            slope,
            lambda,
            n,
            pseudo_inverse,
        })
    }

    fn dense(&self, x: SparseVecView<'_>) -> DVector<f64> {
        let mut v = DVector::zeros(self.w.len());
        for (j, val) in x.iter() {
            v[j] = val;
        }
        v
    }

    /// Fold gradient at `w*`.
    fn fold_grad(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let nn = self.n - 1.0;
        &self.grad * (self.n / nn) - x * (self.slope[i] / nn) - &self.w * (self.lambda / nn)
    }

    /// Estimated `w*(-i)` after one Newton step.
    pub fn fold_weights(&self, ds: &Dataset, i: usize) -> Vec<f64> {
        let x = self.dense(ds.row(i));
        let s = self.curvature[i] / (self.n - 1.0);
        let g = self.fold_grad(i, &x);
        let step = match sherman_morrison_update(&self.h_tilde_inv, s, &x) {
            Some(m) => m * g,
            None => self.fallback_inverse(&x, s) * g,
        };
        (&self.w - step).iter().copied().collect()
    }

    /// Estimated `X_i w*(-i)` in `O(d²)`.
    pub fn fold_margin(&self, ds: &Dataset, i: usize) -> f64 {
        let x = self.dense(ds.row(i));
        let s = self.curvature[i] / (self.n - 1.0);
        let g = self.fold_grad(i, &x);
        let u = &self.h_tilde_inv * &x;
        let denom = 1.0 - s * x.dot(&u);
        let base = x.dot(&self.w);
        if denom.abs() > 1e-12 {
            // xᵀ(M + s u uᵀ / denom) = uᵀ / denom
            base - u.dot(&g) / denom
        } else {
            base - x.dot(&(self.fallback_inverse(&x, s) * g))
        }
    }

    fn fallback_inverse(&self, x: &DVector<f64>, s: f64) -> DMatrix<f64> {
        log::warn!("rank-one fold update is singular, using a pseudo-inverse");
        let h = self
            .h_tilde_inv
            .clone()
            .pseudo_inverse(1e-12)
            .unwrap_or_else(|_| DMatrix::zeros(x.len(), x.len()));
        (h - x * x.transpose() * s)
            .pseudo_inverse(1e-12)
            .unwrap_or_else(|_| DMatrix::zeros(x.len(), x.len()))
    }
}

/// Leave-one-out error with every fold replaced by one Newton step from the
/// full-data model.
pub fn loocv_approx(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &LoocvConfig,
) -> Result<LoocvReport> {
    if ds.task() != Task::Classification {
        return Err(Error::Config("LOOCV needs a classification dataset".into()));
    }
    if !reg.is_plain_l2() {
        return Err(Error::Specialization(format!(
            "approximate LOOCV needs a plain L2 regularizer, got {}",
            reg.name()
        )));
    }
    if ds.n() < 2 {
        return Err(Error::Domain("LOOCV needs at least two instances".into()));
    }
    let start = Instant::now();
    let base = base_model(ds, loss, reg, &cfg.train)?;
    let t0 = Instant::now();
    let approx = ApproxLoocv::new(ds, &base)?;
    let setup = t0.elapsed().as_secs_f64();
    let per_instance: Vec<FoldOutcome> = in_pool(cfg.threads, || {
        (0..ds.n())
            .into_par_iter()
            .map(|i| {
                let t = Instant::now();
                let m = approx.fold_margin(ds, i);
                let predicted = sign(m);
                FoldOutcome {
                    index: i,
                    status: FoldStatus::Approximated,
                    bound: Interval::point(m),
                    predicted,
                    correct: predicted == ds.y()[i],
                    stopped_early: false,
                    iterations: 1,
                    train_time_secs: t.elapsed().as_secs_f64(),
                }
            })
            .collect()
    })?;
    Ok(LoocvReport {
        method: "approx".into(),
        n: ds.n(),
        error_count: per_instance.iter().filter(|f| !f.correct).count(),
        trainings_performed: 0,
        base_relative_gap: base.relative_gap,
        gap_time_total_secs: setup,
        total_time_secs: start.elapsed().as_secs_f64(),
        per_instance,
    })
}
