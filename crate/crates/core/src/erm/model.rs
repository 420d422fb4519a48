use serde::{Deserialize, Serialize};

use super::{mean_loss, mean_loss_conj};
use crate::convex::{Loss, Regularizer};
use crate::data::Dataset;

/// Quantities retained at the optimum so that gaps of modified problems can
/// be evaluated without touching the unmodified part of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeCache {
    /// `X w`
    pub xw: Vec<f64>,
    /// `Xᵀ α`
    pub xt_alpha: Vec<f64>,
    /// `(1/n) Σ ℓ(X_i w)`
    pub loss_sum: f64,
    /// `Σ ρ_j(w_j)`
    pub reg_sum: f64,
    /// `(1/n) Σ ℓ*(-α_i)`
    pub loss_conj_sum: f64,
    /// `Σ ρ_j*((1/n) X_jᵀ α)`
    pub reg_conj_sum: f64,
    /// `‖Xᵀα‖²`, used by the L2 shortcuts.
    pub xt_alpha_norm_sq: f64,
}

impl PrecomputeCache {
    pub fn compute(ds: &Dataset, loss: &Loss, reg: &Regularizer, w: &[f64], alpha: &[f64]) -> Self {
        let xw = ds.x().mul_vec(w);
        Self::from_margins(ds, loss, reg, w, alpha, xw)
    }

    pub(crate) fn from_margins(
        ds: &Dataset,
        loss: &Loss,
        reg: &Regularizer,
        w: &[f64],
        alpha: &[f64],
        xw: Vec<f64>,
    ) -> Self {
        let n = ds.n() as f64;
        let xt_alpha = ds.x().tmul_vec(alpha);
        let scaled: Vec<f64> = xt_alpha.iter().map(|v| v / n).collect();
        PrecomputeCache {
            loss_sum: mean_loss(ds, loss, &xw),
            reg_sum: reg.value(w),
            loss_conj_sum: mean_loss_conj(ds, loss, alpha),
            reg_conj_sum: reg.conj_sum(&scaled),
            xt_alpha_norm_sq: xt_alpha.iter().map(|v| v * v).sum(),
            xw,
            xt_alpha,
        }
    }

    pub fn primal(&self) -> f64 {
        self.loss_sum + self.reg_sum
    }

    pub fn dual(&self) -> f64 {
        -(self.loss_conj_sum + self.reg_conj_sum)
    }

    pub fn gap(&self) -> f64 {
        self.primal() - self.dual()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Relative duality gap reached the configured tolerance.
    Converged,
    /// The caller's stop predicate fired first.
    Predicate,
}

/// Solution of one regularized ERM problem together with its cache.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub loss: Loss,
    pub reg: Regularizer,
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub cache: PrecomputeCache,
    pub relative_gap: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

impl TrainedModel {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.w.len()
    }

    pub fn gap(&self) -> f64 {
        self.cache.gap()
    }

    pub fn predict(&self, x: crate::data::SparseVecView<'_>) -> f64 {
        x.dot(&self.w)
    }
}
