use serde::{Deserialize, Serialize};

use super::{ConvexFn, Interval, FEASIBILITY_EPS};
use crate::error::{Error, Result};

const INF: f64 = f64::INFINITY;
const NEG_INF: f64 = f64::NEG_INFINITY;

/// Penalty `ρ_j` applied to a single coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Penalty {
    L2 { lambda: f64 },
    ElasticNet { lambda: f64, kappa: f64 },
    L1 { lambda: f64 },
    /// Unregularized coordinate (the intercept).
    Free,
}

impl Penalty {
    pub fn strong_convexity(&self) -> f64 {
        match *self {
            Penalty::L2 { lambda } | Penalty::ElasticNet { lambda, .. } => lambda,
            Penalty::L1 { .. } | Penalty::Free => 0.0,
        }
    }

    /// Differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        match *self {
            Penalty::L2 { .. } | Penalty::Free => true,
            Penalty::ElasticNet { kappa, .. } => kappa == 0.0,
            Penalty::L1 { .. } => false,
        }
    }

    /// Closure of the range of `∂ρ`, the domain of `ρ*`.
    pub fn grad_range(&self) -> Interval {
        match *self {
            Penalty::L2 { .. } | Penalty::ElasticNet { .. } => Interval::REALS,
            Penalty::L1 { lambda } => Interval::new(-lambda, lambda),
            Penalty::Free => Interval::point(0.0),
        }
    }

    /// `argmin_t ρ(t) + (t - v)² / (2 step)`
    pub fn prox(&self, v: f64, step: f64) -> f64 {
        match *self {
            Penalty::L2 { lambda } => v / (1.0 + lambda * step),
            Penalty::ElasticNet { lambda, kappa } => soft(v, kappa * step) / (1.0 + lambda * step),
            Penalty::L1 { lambda } => soft(v, lambda * step),
            Penalty::Free => v,
        }
    }

    /// Second derivative of the smooth part.
    pub fn smooth_curvature(&self) -> f64 {
        self.strong_convexity()
    }

    /// Derivative of the smooth part (`λ t` for the quadratic penalties).
    pub fn smooth_derivative(&self, t: f64) -> f64 {
        self.strong_convexity() * t
    }

    /// `ρ(b) - ρ(a)` without cancellation when `b` is close to `a`.
    pub fn value_change(&self, a: f64, b: f64) -> f64 {
        let smooth = 0.5 * self.strong_convexity() * (b - a) * (b + a);
        let k = self.abs_weight();
        let abs = if a >= 0.0 && b >= 0.0 {
            b - a
        } else if a <= 0.0 && b <= 0.0 {
            a - b
        } else {
            b.abs() - a.abs()
        };
        smooth + k * abs
    }

    /// Weight of the `|t|` part.
    pub fn abs_weight(&self) -> f64 {
        match *self {
            Penalty::ElasticNet { kappa, .. } => kappa,
            Penalty::L1 { lambda } => lambda,
            _ => 0.0,
        }
    }
}

fn soft(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

impl ConvexFn for Penalty {
    fn value(&self, t: f64) -> f64 {
        match *self {
            Penalty::L2 { lambda } => 0.5 * lambda * t * t,
            Penalty::ElasticNet { lambda, kappa } => 0.5 * lambda * t * t + kappa * t.abs(),
            Penalty::L1 { lambda } => lambda * t.abs(),
            Penalty::Free => 0.0,
        }
    }

    fn subgrad(&self, t: f64) -> Interval {
        let k = self.abs_weight();
        let base = self.smooth_derivative(t);
        if t > 0.0 {
            Interval::point(base + k)
        } else if t < 0.0 {
            Interval::point(base - k)
        } else {
            Interval::new(-k, k)
        }
    }

    fn conj(&self, s: f64) -> f64 {
        match *self {
            Penalty::L2 { lambda } => s * s / (2.0 * lambda),
            Penalty::ElasticNet { lambda, kappa } => {
                let e = (s.abs() - kappa).max(0.0);
                e * e / (2.0 * lambda)
            }
            Penalty::L1 { lambda } => {
                if s.abs() <= lambda * (1.0 + FEASIBILITY_EPS) {
                    0.0
                } else {
                    INF
                }
            }
            Penalty::Free => {
                if s.abs() <= FEASIBILITY_EPS {
                    0.0
                } else {
                    INF
                }
            }
        }
    }

    fn conj_subgrad(&self, s: f64) -> Interval {
        match *self {
            Penalty::L2 { lambda } => Interval::point(s / lambda),
            Penalty::ElasticNet { lambda, kappa } => {
                Interval::point(s.signum() * (s.abs() - kappa).max(0.0) / lambda)
            }
            Penalty::L1 { lambda } => {
                let a = s.abs();
                if a < lambda * (1.0 - FEASIBILITY_EPS) {
                    Interval::point(0.0)
                } else if a <= lambda * (1.0 + FEASIBILITY_EPS) {
                    if s > 0.0 {
                        Interval::new(0.0, INF)
                    } else {
                        Interval::new(NEG_INF, 0.0)
                    }
                } else if s > 0.0 {
                    Interval::point(INF)
                } else {
                    Interval::point(NEG_INF)
                }
            }
            Penalty::Free => {
                if s.abs() <= FEASIBILITY_EPS {
                    Interval::REALS
                } else if s > 0.0 {
                    Interval::point(INF)
                } else {
                    Interval::point(NEG_INF)
                }
            }
        }
    }
}

/// The penalty family shared by all regularized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegKind {
    L2 { lambda: f64 },
    ElasticNet { lambda: f64, kappa: f64 },
    L1 { lambda: f64 },
}

/// Separable regularizer `Σ_j ρ_j(w_j)`, optionally with one unregularized
/// (intercept) coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegKind,
    pub intercept: Option<usize>,
}

impl Regularizer {
    pub fn l2(lambda: f64) -> Self {
        Regularizer {
            kind: RegKind::L2 { lambda },
            intercept: None,
        }
    }

    pub fn elastic_net(lambda: f64, kappa: f64) -> Self {
        Regularizer {
            kind: RegKind::ElasticNet { lambda, kappa },
            intercept: None,
        }
    }

    pub fn l1(lambda: f64) -> Self {
        Regularizer {
            kind: RegKind::L1 { lambda },
            intercept: None,
        }
    }

    pub fn with_intercept(mut self, j: usize) -> Self {
        self.intercept = Some(j);
        self
    }

    pub fn parse(name: &str, lambda: f64, kappa: f64) -> Result<Regularizer> {
        let kind = match name {
            "l2" => RegKind::L2 { lambda },
            "elastic-net" | "enet" => RegKind::ElasticNet { lambda, kappa },
            "l1" => RegKind::L1 { lambda },
            other => return Err(Error::Config(format!("unknown regularizer {other:?}"))),
        };
        let reg = Regularizer {
            kind,
            intercept: None,
        };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        let lambda = self.lambda();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
        }
        if let RegKind::ElasticNet { kappa, .. } = self.kind {
            if !(kappa >= 0.0 && kappa.is_finite()) {
                return Err(Error::Config(format!("kappa must be nonnegative, got {kappa}")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            RegKind::L2 { .. } => "l2",
            RegKind::ElasticNet { .. } => "elastic-net",
            RegKind::L1 { .. } => "l1",
        }
    }

    pub fn lambda(&self) -> f64 {
        match self.kind {
            RegKind::L2 { lambda } | RegKind::ElasticNet { lambda, .. } | RegKind::L1 { lambda } => {
                lambda
            }
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.kind = match self.kind {
            RegKind::L2 { .. } => RegKind::L2 { lambda },
            RegKind::ElasticNet { kappa, .. } => RegKind::ElasticNet { lambda, kappa },
            RegKind::L1 { .. } => RegKind::L1 { lambda },
        };
        self
    }

    pub fn penalty(&self, j: usize) -> Penalty {
        if self.intercept == Some(j) {
            return Penalty::Free;
        }
        match self.kind {
            RegKind::L2 { lambda } => Penalty::L2 { lambda },
            RegKind::ElasticNet { lambda, kappa } => Penalty::ElasticNet { lambda, kappa },
            RegKind::L1 { lambda } => Penalty::L1 { lambda },
        }
    }

    /// Strong convexity constant of the whole regularizer; zero when any
    /// coordinate is left unregularized or the penalty is pure L1.
    pub fn strong_convexity(&self) -> f64 {
        if self.intercept.is_some() {
            return 0.0;
        }
        match self.kind {
            RegKind::L2 { lambda } | RegKind::ElasticNet { lambda, .. } => lambda,
            RegKind::L1 { .. } => 0.0,
        }
    }

    /// Plain `λ/2 ‖w‖²` without intercept, the case with closed-form
    /// shortcuts.
    pub fn is_plain_l2(&self) -> bool {
        self.intercept.is_none()
            && match self.kind {
                RegKind::L2 { .. } => true,
                RegKind::ElasticNet { kappa, .. } => kappa == 0.0,
                RegKind::L1 { .. } => false,
            }
    }

    /// Every coordinate penalty is differentiable.
    pub fn is_smooth(&self) -> bool {
        match self.kind {
            RegKind::L2 { .. } => true,
            RegKind::ElasticNet { kappa, .. } => kappa == 0.0,
            RegKind::L1 { .. } => false,
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        w.iter()
            .enumerate()
            .map(|(j, &t)| self.penalty(j).value(t))
            .sum()
    }

    /// `Σ_j ρ_j*(v_j)`
    pub fn conj_sum(&self, v: &[f64]) -> f64 {
        let mut total = 0.0;
        for (j, &s) in v.iter().enumerate() {
            let c = self.penalty(j).conj(s);
            if c == INF {
                return INF;
            }
            total += c;
        }
        total
    }

    /// Regularizer for the problem after removing the listed features.
    pub fn after_feature_removal(&self, removed: &[usize]) -> Regularizer {
        let intercept = self.intercept.and_then(|b| {
            if removed.contains(&b) {
                None
            } else {
                Some(b - removed.iter().filter(|&&r| r < b).count())
            }
        });
        Regularizer {
            kind: self.kind,
            intercept,
        }
    }
}
