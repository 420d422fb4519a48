//! Primal and dual objectives, the KKT transfer map and training.

mod model;
mod solver;

pub use model::{PrecomputeCache, StopReason, TrainedModel};
pub use solver::{train, train_with_stop_predicate, SolverKind, TrainConfig};

use crate::convex::{ConvexFn, Loss, Regularizer};
use crate::data::Dataset;

/// `(1/n) Σ ℓ_{y_i}(t_i)` for a vector of predictions.
pub fn mean_loss(ds: &Dataset, loss: &Loss, xw: &[f64]) -> f64 {
    let n = ds.n();
    if n == 0 {
        return 0.0;
    }
    let s: f64 = ds
        .y()
        .iter()
        .zip(xw)
        .map(|(&y, &t)| loss.value(y, t))
        .sum();
    s / n as f64
}

/// `(1/n) Σ ℓ*_{y_i}(-α_i)`; `+inf` when some `α_i` is outside its box.
pub fn mean_loss_conj(ds: &Dataset, loss: &Loss, alpha: &[f64]) -> f64 {
    let n = ds.n();
    let mut s = 0.0;
    for (&y, &a) in ds.y().iter().zip(alpha) {
        let c = loss.conj(y, -a);
        if c == f64::INFINITY {
            return f64::INFINITY;
        }
        s += c;
    }
    s / n as f64
}

pub fn primal_objective(ds: &Dataset, loss: &Loss, reg: &Regularizer, w: &[f64]) -> f64 {
    assert_eq!(w.len(), ds.d(), "primal vector has wrong length");
    mean_loss(ds, loss, &ds.x().mul_vec(w)) + reg.value(w)
}

/// Dual objective; `-inf` outside the dual domain.
pub fn dual_objective(ds: &Dataset, loss: &Loss, reg: &Regularizer, alpha: &[f64]) -> f64 {
    assert_eq!(alpha.len(), ds.n(), "dual vector has wrong length");
    let n = ds.n() as f64;
    let lc = mean_loss_conj(ds, loss, alpha);
    if lc == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let v: Vec<f64> = ds.x().tmul_vec(alpha).into_iter().map(|s| s / n).collect();
    let rc = reg.conj_sum(&v);
    if rc == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    -lc - rc
}

pub fn duality_gap(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    w: &[f64],
    alpha: &[f64],
) -> f64 {
    let d = dual_objective(ds, loss, reg, alpha);
    if d == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    primal_objective(ds, loss, reg, w) - d
}

/// Relative gap `(P - D) / P`, or the absolute gap when `P = 0`.
pub fn relative_gap(primal: f64, gap: f64) -> f64 {
    let g = gap.max(0.0);
    if primal > 0.0 {
        g / primal
    } else {
        g
    }
}

/// KKT map `α_i = -ℓ'_{y_i}(X_i w)`, taking the minimum-magnitude element of
/// the subgradient.
pub fn dual_from_primal(ds: &Dataset, loss: &Loss, w: &[f64]) -> Vec<f64> {
    dual_from_margins(ds, loss, &ds.x().mul_vec(w))
}

pub fn dual_from_margins(ds: &Dataset, loss: &Loss, xw: &[f64]) -> Vec<f64> {
    ds.y()
        .iter()
        .zip(xw)
        .map(|(&y, &t)| -loss.subgrad(y, t).min_abs_element())
        .collect()
}

/// KKT map followed by a restoration step that moves `α` into the domain
/// of the regularizer conjugate.
///
/// The unregularized coordinate requires `X_bᵀα = 0`: the larger of the two
/// sign groups of `X_ib α_i` is shrunk toward zero until they balance. L1
/// coordinates require `|X_jᵀα| ≤ nλ`: the whole vector is scaled down by
/// the worst violation. Both moves keep every `α_i` in its loss box because
/// the box is an interval containing zero.
pub fn feasible_dual(ds: &Dataset, loss: &Loss, reg: &Regularizer, xw: &[f64]) -> Vec<f64> {
    let mut alpha = dual_from_margins(ds, loss, xw);
    restore_dual_feasibility(ds, reg, &mut alpha);
    alpha
}

pub fn restore_dual_feasibility(ds: &Dataset, reg: &Regularizer, alpha: &mut [f64]) {
    if let Some(b) = reg.intercept {
        if b < ds.d() {
            balance_column(ds, b, alpha);
        }
    }
    if let crate::convex::RegKind::L1 { lambda } = reg.kind {
        let n = ds.n() as f64;
        let mut worst = 0.0f64;
        for j in 0..ds.d() {
            if reg.intercept == Some(j) {
                continue;
            }
            worst = worst.max(ds.col(j).dot(alpha).abs() / (n * lambda));
        }
        if worst > 1.0 {
            let f = 1.0 / worst;
            for a in alpha.iter_mut() {
                *a *= f;
            }
        }
    }
}

fn balance_column(ds: &Dataset, b: usize, alpha: &mut [f64]) {
    let col = ds.col(b);
    let (mut pos, mut neg) = (0.0, 0.0);
    for (i, v) in col.iter() {
        let p = v * alpha[i];
        if p > 0.0 {
            pos += p;
        } else {
            neg -= p;
        }
    }
    if pos == neg {
        return;
    }
    let (shrink_positive, f) = if pos > neg {
        (true, neg / pos)
    } else {
        (false, pos / neg)
    };
    for (i, v) in col.iter() {
        let p = v * alpha[i];
        if (shrink_positive && p > 0.0) || (!shrink_positive && p < 0.0) {
            alpha[i] *= f;
        }
    }
    // instances with X_ib = 0 do not enter the balance and stay untouched
}

/// Per-coordinate check that `w_j ∈ ∂ρ_j*((1/n) X_jᵀα)` up to `tol`.
pub fn kkt_violation(ds: &Dataset, reg: &Regularizer, w: &[f64], alpha: &[f64]) -> f64 {
    let n = ds.n() as f64;
    let xta = ds.x().tmul_vec(alpha);
    let mut worst = 0.0f64;
    for j in 0..ds.d() {
        let iv = reg.penalty(j).conj_subgrad(xta[j] / n);
        let v = if iv.contains(w[j]) {
            0.0
        } else if w[j] < iv.lo {
            iv.lo - w[j]
        } else {
            w[j] - iv.hi
        };
        worst = worst.max(v);
    }
    worst
}
