//! Regions certified to contain the optimum of a modified problem, and the
//! prediction intervals derived from them.
//!
//! Everything here is driven by a duality gap `G` of a candidate pair
//! `(ŵ, α̂)` for the modified problem: a λ-strongly convex regularizer puts
//! the new primal optimum in a ball of radius `sqrt(2G/λ)` around `ŵ`, and a
//! μ-smooth loss puts the new dual optimum in a ball of radius
//! `sqrt(2 n μ G)` around `α̂`. Each ball is then pushed through the KKT
//! conditions to a per-coordinate box on the other side.

use serde::{Deserialize, Serialize};

use crate::convex::{maxlin_sparse, minlin_sparse, ConvexFn, Interval, Loss, Regularizer};
use crate::data::{Dataset, SparseVecView};
use crate::error::{Error, Result};

/// Duality gap of a candidate pair for a modified problem, with the
/// constants needed to turn it into radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    #[serde(with = "crate::convex::ext_real")]
    pub gap: f64,
    pub n_new: usize,
    /// Strong convexity of the regularizer (0 when it has none).
    pub lambda: f64,
    /// Smoothness of the loss.
    pub mu: f64,
}

impl GapCertificate {
    pub fn new(gap: f64, n_new: usize, lambda: f64, mu: f64) -> Self {
        GapCertificate {
            gap,
            n_new,
            lambda,
            mu,
        }
    }

    pub fn for_problem(gap: f64, n_new: usize, loss: &Loss, reg: &Regularizer) -> Self {
        Self::new(gap, n_new, reg.strong_convexity(), loss.smoothness())
    }

    /// Gap with rounding noise below zero removed.
    pub fn clamped_gap(&self) -> f64 {
        self.gap.max(0.0)
    }

    /// `r_P = sqrt(2 G / λ)`
    pub fn radius_primal(&self) -> Result<f64> {
        if !(self.lambda > 0.0) {
            return Err(Error::Assumption(
                "the primal ball needs a strongly convex regularizer".into(),
            ));
        }
        Ok((2.0 * self.clamped_gap() / self.lambda).sqrt())
    }

    /// `r_D = sqrt(2 n_new μ G)`
    pub fn radius_dual(&self) -> Result<f64> {
        if !(self.mu > 0.0) {
            return Err(Error::Assumption("the dual ball needs a smooth loss".into()));
        }
        Ok((2.0 * self.n_new as f64 * self.mu * self.clamped_gap()).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamRegion {
    PrimalBall { center: Vec<f64>, radius: f64 },
    DualBall { center: Vec<f64>, radius: f64 },
    PrimalBox { boxes: Vec<Interval> },
    DualBox { boxes: Vec<Interval> },
}

impl ParamRegion {
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        match self {
            ParamRegion::PrimalBall { center, radius } | ParamRegion::DualBall { center, radius } => {
                let d2: f64 = center.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() <= radius + tol
            }
            ParamRegion::PrimalBox { boxes } | ParamRegion::DualBox { boxes } => {
                boxes.iter().zip(v).all(|(b, &x)| b.contains_approx(x, tol))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    PrimalScb,
    DualScb,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::PrimalScb => "primal-scb",
            BoundKind::DualScb => "dual-scb",
        }
    }

    /// Checks that the bound's curvature assumption holds.
    pub fn check_assumptions(&self, loss: &Loss, reg: &Regularizer) -> Result<()> {
        match self {
            BoundKind::PrimalScb if !(reg.strong_convexity() > 0.0) => Err(Error::Assumption(
                "primal-scb needs a strongly convex regularizer (no intercept, no pure L1)".into(),
            )),
            BoundKind::DualScb if !(loss.smoothness() > 0.0) => {
                Err(Error::Assumption("dual-scb needs a smooth loss".into()))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for BoundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "primal-scb" | "primal" => Ok(BoundKind::PrimalScb),
            "dual-scb" | "dual" => Ok(BoundKind::DualScb),
            other => Err(Error::Config(format!("unknown bound {other:?}"))),
        }
    }
}

fn shift(norm: f64, r: f64) -> f64 {
    if norm == 0.0 {
        0.0
    } else {
        r * norm
    }
}

/// Per-instance box for the new dual optimum implied by the primal ball.
pub fn dual_box_from_primal_ball(ds_new: &Dataset, loss: &Loss, w_hat: &[f64], r_p: f64) -> Vec<Interval> {
    let y = ds_new.y();
    (0..ds_new.n())
        .map(|i| {
            let t = ds_new.row(i).dot(w_hat);
            let s = shift(ds_new.instance_norm(i), r_p);
            let lo = -loss.subgrad(y[i], t + s).hi;
            let hi = -loss.subgrad(y[i], t - s).lo;
            Interval::new(lo, hi).intersect(&loss.dual_box(y[i]))
        })
        .collect()
}

/// Bounds on `X_jᵀ α*new` from the dual ball, optionally intersected with
/// what the dual domain alone allows.
#[allow(clippy::too_many_arguments)]
pub fn f_bounds(
    ds_new: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    alpha_hat: &[f64],
    r_d: f64,
    j: usize,
    tighten: bool,
) -> Interval {
    let col = ds_new.col(j);
    let center = col.dot(alpha_hat);
    let s = shift(ds_new.feature_norm(j), r_d);
    let raw = Interval::new(center - s, center + s);
    if !tighten {
        return raw;
    }
    let y = ds_new.y();
    let boxes: Vec<(f64, Interval)> = col.iter().map(|(i, v)| (v, loss.dual_box(y[i]))).collect();
    let mut lo_dom = 0.0;
    let mut hi_dom = 0.0;
    for (v, b) in &boxes {
        lo_dom += term_min(b, *v);
        hi_dom += term_max(b, *v);
    }
    let n = ds_new.n() as f64;
    let range = reg.penalty(j).grad_range();
    let lo = raw.lo.max(nan_low(lo_dom)).max(scaled(n, range.lo));
    let hi = raw.hi.min(nan_high(hi_dom)).min(scaled(n, range.hi));
    Interval { lo, hi }
}

fn scaled(n: f64, v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        n * v
    }
}

fn term_min(b: &Interval, c: f64) -> f64 {
    if c > 0.0 {
        c * b.lo
    } else if c < 0.0 {
        c * b.hi
    } else {
        0.0
    }
}

fn term_max(b: &Interval, c: f64) -> f64 {
    if c > 0.0 {
        c * b.hi
    } else if c < 0.0 {
        c * b.lo
    } else {
        0.0
    }
}

fn nan_low(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn nan_high(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Interval `[∂̲ρ_j*(F̲/n), ∂̄ρ_j*(F̄/n)]` for one coordinate.
pub fn coordinate_box(reg: &Regularizer, j: usize, f: Interval, n_new: usize) -> Interval {
    let n = n_new as f64;
    let pen = reg.penalty(j);
    let lo = pen.conj_subgrad(f.lo / n).lo;
    let hi = pen.conj_subgrad(f.hi / n).hi;
    if lo <= hi {
        Interval { lo, hi }
    } else {
        // only reachable through rounding when the F-interval is degenerate
        Interval { lo: hi, hi: lo }
    }
}

/// Per-feature box for the new primal optimum implied by the dual ball.
pub fn primal_box_from_dual_ball(
    ds_new: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    alpha_hat: &[f64],
    r_d: f64,
    tighten: bool,
) -> Vec<Interval> {
    (0..ds_new.d())
        .map(|j| {
            let f = f_bounds(ds_new, loss, reg, alpha_hat, r_d, j, tighten);
            coordinate_box(reg, j, f, ds_new.n())
        })
        .collect()
}

/// `[xᵀŵ - r_P ‖x‖, xᵀŵ + r_P ‖x‖]`
pub fn predict_bounds_primal_scb(x: SparseVecView<'_>, w_hat: &[f64], r_p: f64) -> Interval {
    let c = x.dot(w_hat);
    let s = shift(x.norm(), r_p);
    Interval::new(c - s, c + s)
}

/// `[minlin, maxlin]` of `xᵀw` over the primal box.
pub fn predict_bounds_dual_scb(x: SparseVecView<'_>, w_box: &[Interval]) -> Interval {
    Interval {
        lo: minlin_sparse(w_box, x.iter()),
        hi: maxlin_sparse(w_box, x.iter()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Positive,
    Negative,
    Undetermined,
}

/// Positive iff the interval lies strictly above zero, negative iff
/// strictly below.
pub fn label_determination(bound: Interval) -> Label {
    if bound.lo > 0.0 {
        Label::Positive
    } else if bound.hi < 0.0 {
        Label::Negative
    } else {
        Label::Undetermined
    }
}

/// Per-column sums that make the dual-side box of any single coordinate an
/// O(1) update, both for the unmodified problem and for the problem with
/// one instance removed.
#[derive(Debug, Clone)]
pub struct ColumnAggregates {
    n: usize,
    xt_alpha: Vec<f64>,
    norm_sq: Vec<f64>,
    lo_finite: Vec<f64>,
    lo_inf: Vec<u32>,
    hi_finite: Vec<f64>,
    hi_inf: Vec<u32>,
    tighten: bool,
}

impl ColumnAggregates {
    pub fn new(ds: &Dataset, loss: &Loss, alpha: &[f64], tighten: bool) -> Self {
        let d = ds.d();
        let y = ds.y();
        let mut agg = ColumnAggregates {
            n: ds.n(),
            xt_alpha: vec![0.0; d],
            norm_sq: vec![0.0; d],
            lo_finite: vec![0.0; d],
            lo_inf: vec![0; d],
            hi_finite: vec![0.0; d],
            hi_inf: vec![0; d],
            tighten,
        };
        for j in 0..d {
            for (i, v) in ds.col(j).iter() {
                agg.xt_alpha[j] += v * alpha[i];
                agg.norm_sq[j] += v * v;
                let b = loss.dual_box(y[i]);
                let lo = term_min(&b, v);
                let hi = term_max(&b, v);
                if lo.is_finite() {
                    agg.lo_finite[j] += lo;
                } else {
                    agg.lo_inf[j] += 1;
                }
                if hi.is_finite() {
                    agg.hi_finite[j] += hi;
                } else {
                    agg.hi_inf[j] += 1;
                }
            }
        }
        agg
    }

    /// F-interval of coordinate `j`; `removed` is `(x_ij, α_i, box_i)` of an
    /// instance taken out of the problem.
    pub fn f_interval(&self, reg: &Regularizer, j: usize, r_d: f64, removed: Option<(f64, f64, Interval)>) -> Interval {
        let (mut center, mut nsq, mut lo_f, mut lo_i, mut hi_f, mut hi_i) = (
            self.xt_alpha[j],
            self.norm_sq[j],
            self.lo_finite[j],
            self.lo_inf[j],
            self.hi_finite[j],
            self.hi_inf[j],
        );
        let mut n = self.n;
        if let Some((v, a, b)) = removed {
            n -= 1;
            center -= v * a;
            nsq = (nsq - v * v).max(0.0);
            let lo = term_min(&b, v);
            let hi = term_max(&b, v);
            if lo.is_finite() {
                lo_f -= lo;
            } else {
                lo_i -= 1;
            }
            if hi.is_finite() {
                hi_f -= hi;
            } else {
                hi_i -= 1;
            }
        }
        let s = shift(nsq.sqrt(), r_d);
        let mut lo = center - s;
        let mut hi = center + s;
        if self.tighten {
            let nf = n as f64;
            let range = reg.penalty(j).grad_range();
            if lo_i == 0 {
                lo = lo.max(lo_f);
            }
            if hi_i == 0 {
                hi = hi.min(hi_f);
            }
            lo = lo.max(scaled(nf, range.lo));
            hi = hi.min(scaled(nf, range.hi));
        }
        Interval { lo, hi }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}
