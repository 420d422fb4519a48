use serde::{Deserialize, Serialize};

use super::{ConvexFn, Interval};
use crate::error::{Error, Result};

const INF: f64 = f64::INFINITY;
const NEG_INF: f64 = f64::NEG_INFINITY;
// slack when a conjugate argument sits on the closed boundary of its domain
const DOMAIN_SLACK: f64 = 1e-12;

/// Loss functions `ℓ_y(t)` of a linear prediction `t` against outcome `y`.
///
/// The classification losses depend on `y ∈ {-1, +1}` only through the
/// margin `z = y t`; they are implemented on `z` and mapped back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Loss {
    Squared,
    Huber { gamma: f64 },
    SquaredHinge,
    SmoothedHinge { gamma: f64 },
    Logistic,
}

impl Loss {
    pub fn parse(name: &str, gamma: f64) -> Result<Loss> {
        let loss = match name {
            "squared" => Loss::Squared,
            "huber" => Loss::Huber { gamma },
            "squared-hinge" => Loss::SquaredHinge,
            "smoothed-hinge" => Loss::SmoothedHinge { gamma },
            "logistic" => Loss::Logistic,
            other => return Err(Error::Config(format!("unknown loss {other:?}"))),
        };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Loss::Huber { gamma } | Loss::SmoothedHinge { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config(format!("gamma must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Huber { .. } => "huber",
            Loss::SquaredHinge => "squared-hinge",
            Loss::SmoothedHinge { .. } => "smoothed-hinge",
            Loss::Logistic => "logistic",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(
            self,
            Loss::SquaredHinge | Loss::SmoothedHinge { .. } | Loss::Logistic
        )
    }

    /// Smoothness constant μ: the derivative is μ-Lipschitz.
    ///
    /// The smoothed hinge with parameter γ has curvature `1/γ` on its
    /// quadratic piece, so μ = 1/γ.
    pub fn smoothness(&self) -> f64 {
        match *self {
            Loss::Squared | Loss::Huber { .. } => 1.0,
            Loss::SquaredHinge => 2.0,
            Loss::SmoothedHinge { gamma } => 1.0 / gamma,
            Loss::Logistic => 0.25,
        }
    }

    pub fn value(&self, y: f64, t: f64) -> f64 {
        match *self {
            Loss::Squared => 0.5 * (t - y) * (t - y),
            Loss::Huber { gamma } => {
                let r = (t - y).abs();
                if r <= gamma {
                    0.5 * r * r
                } else {
                    gamma * r - 0.5 * gamma * gamma
                }
            }
            Loss::SquaredHinge => {
                let m = (1.0 - y * t).max(0.0);
                m * m
            }
            Loss::SmoothedHinge { gamma } => {
                let z = y * t;
                if z >= 1.0 {
                    0.0
                } else if z >= 1.0 - gamma {
                    (1.0 - z) * (1.0 - z) / (2.0 * gamma)
                } else {
                    1.0 - z - 0.5 * gamma
                }
            }
            Loss::Logistic => {
                let z = y * t;
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
        }
    }

    pub fn derivative(&self, y: f64, t: f64) -> f64 {
        match *self {
            Loss::Squared => t - y,
            Loss::Huber { gamma } => (t - y).clamp(-gamma, gamma),
            Loss::SquaredHinge => -2.0 * y * (1.0 - y * t).max(0.0),
            Loss::SmoothedHinge { gamma } => {
                let z = y * t;
                if z >= 1.0 {
                    0.0
                } else if z >= 1.0 - gamma {
                    -y * (1.0 - z) / gamma
                } else {
                    -y
                }
            }
            Loss::Logistic => {
                let z = y * t;
                let g = if z >= 0.0 {
                    let e = (-z).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + z.exp())
                };
                y * g
            }
        }
    }

    /// All catalog losses are differentiable, so the subgradient is a point.
    pub fn subgrad(&self, y: f64, t: f64) -> Interval {
        Interval::point(self.derivative(y, t))
    }

    /// Second derivative (a generalized one at the kinks of the derivative).
    pub fn second_derivative(&self, y: f64, t: f64) -> f64 {
        match *self {
            Loss::Squared => 1.0,
            Loss::Huber { gamma } => {
                if (t - y).abs() < gamma {
                    1.0
                } else {
                    0.0
                }
            }
            Loss::SquaredHinge => {
                if y * t < 1.0 {
                    2.0
                } else {
                    0.0
                }
            }
            Loss::SmoothedHinge { gamma } => {
                let z = y * t;
                if z < 1.0 && z > 1.0 - gamma {
                    1.0 / gamma
                } else {
                    0.0
                }
            }
            Loss::Logistic => {
                let z = y * t;
                let p = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                p * (1.0 - p)
            }
        }
    }

    /// Closure of the range of the derivative; equals the domain of `ℓ_y*`.
    pub fn grad_range(&self, y: f64) -> Interval {
        match *self {
            Loss::Squared => Interval::REALS,
            Loss::Huber { gamma } => Interval::new(-gamma, gamma),
            Loss::SquaredHinge => margin_range(y, Interval::new(NEG_INF, 0.0)),
            Loss::SmoothedHinge { .. } | Loss::Logistic => {
                margin_range(y, Interval::new(-1.0, 0.0))
            }
        }
    }

    /// Box that every feasible dual coordinate `α_i = -ℓ'` lies in.
    pub fn dual_box(&self, y: f64) -> Interval {
        self.grad_range(y).neg()
    }

    pub fn conj(&self, y: f64, s: f64) -> f64 {
        match *self {
            Loss::Squared => 0.5 * s * s + s * y,
            Loss::Huber { gamma } => {
                if s.abs() <= gamma * (1.0 + DOMAIN_SLACK) {
                    let s = s.clamp(-gamma, gamma);
                    0.5 * s * s + s * y
                } else {
                    INF
                }
            }
            Loss::SquaredHinge => {
                let u = y * s;
                if u <= DOMAIN_SLACK {
                    let u = u.min(0.0);
                    u + 0.25 * u * u
                } else {
                    INF
                }
            }
            Loss::SmoothedHinge { gamma } => match unit_margin(y * s) {
                Some(u) => u + 0.5 * gamma * u * u,
                None => INF,
            },
            Loss::Logistic => match unit_margin(y * s) {
                Some(u) => {
                    let p = -u;
                    xlogx(1.0 - p) + xlogx(p)
                }
                None => INF,
            },
        }
    }

    pub fn conj_subgrad(&self, y: f64, s: f64) -> Interval {
        match *self {
            Loss::Squared => Interval::point(s + y),
            Loss::Huber { gamma } => {
                if s > gamma || s < -gamma {
                    outside(s)
                } else if s == gamma {
                    Interval::new(gamma + y, INF)
                } else if s == -gamma {
                    Interval::new(NEG_INF, y - gamma)
                } else {
                    Interval::point(s + y)
                }
            }
            Loss::SquaredHinge => {
                let u = y * s;
                let iv = if u > 0.0 {
                    Interval::point(INF)
                } else if u == 0.0 {
                    Interval::new(1.0, INF)
                } else {
                    Interval::point(1.0 + 0.5 * u)
                };
                iv.scale(y)
            }
            Loss::SmoothedHinge { gamma } => {
                let u = y * s;
                let iv = if u > 0.0 {
                    Interval::point(INF)
                } else if u < -1.0 {
                    Interval::point(NEG_INF)
                } else if u == 0.0 {
                    Interval::new(1.0, INF)
                } else if u == -1.0 {
                    Interval::new(NEG_INF, 1.0 - gamma)
                } else {
                    Interval::point(1.0 + gamma * u)
                };
                iv.scale(y)
            }
            Loss::Logistic => {
                let u = y * s;
                let iv = if u >= 0.0 {
                    Interval::point(INF)
                } else if u <= -1.0 {
                    Interval::point(NEG_INF)
                } else {
                    Interval::point((1.0 + u).ln() - (-u).ln())
                };
                iv.scale(y)
            }
        }
    }

    /// Binds an outcome, giving a univariate convex function of `t`.
    pub fn at(&self, y: f64) -> LossAt {
        LossAt { loss: *self, y }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossAt {
    pub loss: Loss,
    pub y: f64,
}

impl ConvexFn for LossAt {
    fn value(&self, t: f64) -> f64 {
        self.loss.value(self.y, t)
    }
    fn subgrad(&self, t: f64) -> Interval {
        self.loss.subgrad(self.y, t)
    }
    fn conj(&self, s: f64) -> f64 {
        self.loss.conj(self.y, s)
    }
    fn conj_subgrad(&self, s: f64) -> Interval {
        self.loss.conj_subgrad(self.y, s)
    }
}

fn margin_range(y: f64, on_margin: Interval) -> Interval {
    on_margin.scale(y)
}

fn outside(s: f64) -> Interval {
    if s > 0.0 {
        Interval::point(INF)
    } else {
        Interval::point(NEG_INF)
    }
}

/// Accepts `u ∈ [-1, 0]` (with a rounding slack) and clamps into it.
fn unit_margin(u: f64) -> Option<f64> {
    if u <= DOMAIN_SLACK && u >= -1.0 - DOMAIN_SLACK {
        Some(u.clamp(-1.0, 0.0))
    } else {
        None
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}
