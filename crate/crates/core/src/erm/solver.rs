//! Solvers with a relative duality gap stopping rule.
//!
//! Smooth regularizers use a truncated Newton method (conjugate gradient
//! inner solve, Armijo backtracking). Regularizers with an `|t|` part use
//! proximal coordinate descent with a per-coordinate Newton model and a
//! sufficient-decrease line search.

use serde::{Deserialize, Serialize};

use super::model::{PrecomputeCache, StopReason, TrainedModel};
use super::{feasible_dual, mean_loss, relative_gap};
use crate::convex::{Loss, Penalty, Regularizer};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Newton for smooth regularizers, coordinate descent otherwise.
    #[default]
    Auto,
    Newton,
    CoordinateDescent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Stop once `(P - D) / P` is at most this value.
    pub rel_gap_tol: f64,
    /// Outer Newton iterations before giving up.
    pub max_iter: usize,
    /// Coordinate descent epochs before giving up.
    pub max_epochs: usize,
    pub solver: SolverKind,
    pub warm_start: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rel_gap_tol: 1e-6,
            max_iter: 500,
            max_epochs: 200_000,
            solver: SolverKind::Auto,
            warm_start: None,
        }
    }
}

impl TrainConfig {
    pub fn with_tol(tol: f64) -> Self {
        TrainConfig {
            rel_gap_tol: tol,
            ..Default::default()
        }
    }

    pub fn warm(&self, w: &[f64]) -> Self {
        TrainConfig {
            warm_start: Some(w.to_vec()),
            ..self.clone()
        }
    }
}

pub fn train(ds: &Dataset, loss: &Loss, reg: &Regularizer, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with_stop_predicate(ds, loss, reg, cfg, |_, _, _| false)
}

/// Trains until the relative gap criterion holds or `stop(w, α, gap)`
/// returns true. The predicate sees the absolute duality gap and is checked
/// at the initial point and after every outer iteration (Newton step or
/// coordinate descent epoch).
pub fn train_with_stop_predicate<F>(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &TrainConfig,
    mut stop: F,
) -> Result<TrainedModel>
where
    F: FnMut(&[f64], &[f64], f64) -> bool,
{
    if ds.n() == 0 {
        return Err(Error::Validation("cannot train on zero instances".into()));
    }
    if !(cfg.rel_gap_tol > 0.0) {
        return Err(Error::Config(format!(
            "relative gap tolerance must be positive, got {}",
            cfg.rel_gap_tol
        )));
    }
    loss.validate()?;
    reg.validate()?;
    if let Some(b) = reg.intercept {
        if b >= ds.d() {
            return Err(Error::Config(format!(
                "intercept coordinate {b} out of range for {} features",
                ds.d()
            )));
        }
    }
    let w0 = match &cfg.warm_start {
        Some(w) if w.len() != ds.d() => {
            return Err(Error::Dimension(format!(
                "warm start has length {} but the problem has {} features",
                w.len(),
                ds.d()
            )))
        }
        Some(w) => w.clone(),
        None => vec![0.0; ds.d()],
    };
    let solver = match cfg.solver {
        SolverKind::Auto if reg.is_smooth() => SolverKind::Newton,
        SolverKind::Auto => SolverKind::CoordinateDescent,
        SolverKind::Newton if !reg.is_smooth() => {
            return Err(Error::Config(
                "the Newton solver needs a differentiable regularizer".into(),
            ))
        }
        s => s,
    };
    let mut ctx = Context {
        ds,
        loss,
        reg,
        cfg,
        best_rel: f64::INFINITY,
    };
    match solver {
        SolverKind::Newton => ctx.newton(w0, &mut stop),
        _ => ctx.coordinate_descent(w0, &mut stop),
    }
}

struct Context<'a> {
    ds: &'a Dataset,
    loss: &'a Loss,
    reg: &'a Regularizer,
    cfg: &'a TrainConfig,
    best_rel: f64,
}

enum Check {
    Done(TrainedModel),
    Continue { primal: f64 },
}

impl Context<'_> {
    fn check<F>(&mut self, w: &[f64], xw: Vec<f64>, iterations: usize, stop: &mut F) -> Check
    where
        F: FnMut(&[f64], &[f64], f64) -> bool,
    {
        let alpha = feasible_dual(self.ds, self.loss, self.reg, &xw);
        let cache = PrecomputeCache::from_margins(self.ds, self.loss, self.reg, w, &alpha, xw);
        let gap = cache.gap();
        let rel = relative_gap(cache.primal(), gap);
        self.best_rel = self.best_rel.min(rel);
        let reason = if stop(w, &alpha, gap) {
            StopReason::Predicate
        } else if rel <= self.cfg.rel_gap_tol {
            StopReason::Converged
        } else {
            return Check::Continue {
                primal: cache.primal(),
            };
        };
        Check::Done(TrainedModel {
            loss: *self.loss,
            reg: *self.reg,
            w: w.to_vec(),
            alpha,
            cache,
            relative_gap: rel,
            iterations,
            stop_reason: reason,
        })
    }

    fn not_converged(&self, iterations: usize) -> Error {
        Error::Convergence {
            iterations,
            best_relative_gap: self.best_rel,
        }
    }

    fn newton<F>(&mut self, mut w: Vec<f64>, stop: &mut F) -> Result<TrainedModel>
    where
        F: FnMut(&[f64], &[f64], f64) -> bool,
    {
        let ds = self.ds;
        let n = ds.n() as f64;
        let d = ds.d();
        let y = ds.y();
        let penalties: Vec<Penalty> = (0..d).map(|j| self.reg.penalty(j)).collect();
        let mut stalled = 0usize;
        for iter in 0.. {
            let xw = ds.x().mul_vec(&w);
            let primal = match self.check(&w, xw.clone(), iter, stop) {
                Check::Done(m) => return Ok(m),
                Check::Continue { primal } => primal,
            };
            if iter >= self.cfg.max_iter || stalled >= 3 {
                return Err(self.not_converged(iter));
            }
            let coef: Vec<f64> = xw
                .iter()
                .zip(y)
                .map(|(&t, &yi)| self.loss.derivative(yi, t) / n)
                .collect();
            let curv: Vec<f64> = xw
                .iter()
                .zip(y)
                .map(|(&t, &yi)| self.loss.second_derivative(yi, t) / n)
                .collect();
            let mut g = ds.x().tmul_vec(&coef);
            for j in 0..d {
                g[j] += penalties[j].smooth_derivative(w[j]);
            }
            let gnorm = norm(&g);
            if gnorm == 0.0 {
                stalled += 1;
                continue;
            }
            let hess = |v: &[f64]| -> Vec<f64> {
                let xv = ds.x().mul_vec(v);
                let dv: Vec<f64> = xv.iter().zip(&curv).map(|(a, c)| a * c).collect();
                let mut out = ds.x().tmul_vec(&dv);
                for j in 0..d {
                    let c = penalties[j].smooth_curvature();
                    out[j] += if c > 0.0 { c * v[j] } else { 1e-12 * v[j] };
                }
                out
            };
            let eta = 0.1f64.min(gnorm.sqrt());
            let mut p = conjugate_gradient(hess, &g, eta, 2 * d + 20);
            let mut slope = dot(&g, &p);
            if !(slope < 0.0) {
                p = g.iter().map(|v| -v).collect();
                slope = -gnorm * gnorm;
            }
            let xp = ds.x().mul_vec(&p);
            let allowance = 4.0 * f64::EPSILON * primal.abs().max(1e-300);
            let mut t = 1.0;
            let mut accepted = false;
            let mut wt = vec![0.0; d];
            let mut xwt = vec![0.0; xw.len()];
            for _ in 0..60 {
                for j in 0..d {
                    wt[j] = w[j] + t * p[j];
                }
                for i in 0..xw.len() {
                    xwt[i] = xw[i] + t * xp[i];
                }
                let pt = mean_loss(ds, self.loss, &xwt) + self.reg.value(&wt);
                if pt <= primal + 1e-4 * t * slope + allowance {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                if wt == w {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                w.copy_from_slice(&wt);
            } else {
                stalled += 1;
            }
        }
        unreachable!()
    }

    fn coordinate_descent<F>(&mut self, mut w: Vec<f64>, stop: &mut F) -> Result<TrainedModel>
    where
        F: FnMut(&[f64], &[f64], f64) -> bool,
    {
        let ds = self.ds;
        let nn = ds.n();
        let n = nn as f64;
        let d = ds.d();
        let y = ds.y();
        let mu = self.loss.smoothness();
        let penalties: Vec<Penalty> = (0..d).map(|j| self.reg.penalty(j)).collect();
        let lip: Vec<f64> = (0..d)
            .map(|j| mu * ds.feature_norm(j).powi(2) / n)
            .collect();
        let mut best = f64::INFINITY;
        let mut since_best = 0usize;
        for epoch in 0.. {
            let mut xw = ds.x().mul_vec(&w);
            let primal = match self.check(&w, xw.clone(), epoch, stop) {
                Check::Done(m) => return Ok(m),
                Check::Continue { primal } => primal,
            };
            if self.best_rel < best {
                best = self.best_rel;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if epoch >= self.cfg.max_epochs || since_best > 500 {
                return Err(self.not_converged(epoch));
            }
            // decreases below this are lost in the rounding of the objective
            let noise = 64.0 * f64::EPSILON * primal.abs();
            let mut moved = false;
            for j in 0..d {
                let pen = penalties[j];
                let col = ds.col(j);
                if col.nnz() == 0 {
                    if pen != Penalty::Free && w[j] != 0.0 {
                        w[j] = 0.0;
                        moved = true;
                    }
                    continue;
                }
                let (mut g, mut h) = (0.0, 0.0);
                for (i, v) in col.iter() {
                    g += v * self.loss.derivative(y[i], xw[i]);
                    h += v * v * self.loss.second_derivative(y[i], xw[i]);
                }
                g /= n;
                h /= n;
                if h <= 1e-12 * lip[j] {
                    h = lip[j];
                }
                let wj = w[j];
                let target = pen.prox(wj - g / h, 1.0 / h);
                let step = target - wj;
                if step == 0.0 || !step.is_finite() {
                    continue;
                }
                let model = g * step + pen.value_change(wj, target);
                if !(model < 0.0) {
                    continue;
                }
                let mut beta = 1.0;
                let mut accepted = -model <= noise;
                for _ in 0..if accepted { 0 } else { 40 } {
                    let cand = wj + beta * step;
                    let mut change = 0.0;
                    for (i, v) in col.iter() {
                        let t0 = xw[i];
                        change += self.loss.value(y[i], t0 + beta * step * v) - self.loss.value(y[i], t0);
                    }
                    change = change / n + pen.value_change(wj, cand);
                    if change <= 0.01 * beta * model {
                        accepted = true;
                        break;
                    }
                    beta *= 0.5;
                }
                if !accepted {
                    continue;
                }
                let delta = beta * step;
                w[j] = wj + delta;
                for (i, v) in col.iter() {
                    xw[i] += delta * v;
                }
                moved = true;
            }
            if !moved {
                // nothing left to improve at machine precision
                let xw = ds.x().mul_vec(&w);
                if let Check::Done(m) = self.check(&w, xw, epoch + 1, stop) {
                    return Ok(m);
                }
                return Err(self.not_converged(epoch + 1));
            }
        }
        unreachable!()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Approximately solves `H p = -g` for a positive semidefinite `H` given as a
/// product. Stops on relative residual `eta`, on `max_iter`, or on a
/// direction of (numerically) zero curvature.
fn conjugate_gradient<H>(hess: H, g: &[f64], eta: f64, max_iter: usize) -> Vec<f64>
where
    H: Fn(&[f64]) -> Vec<f64>,
{
    let d = g.len();
    let mut x = vec![0.0; d];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = eta * eta * rr;
    for k in 0..max_iter {
        let hp = hess(&p);
        let php = dot(&p, &hp);
        if !(php > 1e-30 * dot(&p, &p)) {
            if k == 0 {
                return r;
            }
            break;
        }
        let a = rr / php;
        for i in 0..d {
            x[i] += a * p[i];
            r[i] -= a * hp[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new <= target {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..d {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::erm::{duality_gap, primal_objective};

    #[test]
    fn closed_form_squared_l2() {
        let ds = Dataset::from_dense(&[vec![1.0]], vec![1.0], Task::Regression).unwrap();
        let m = train(&ds, &Loss::Squared, &Regularizer::l2(1.0), &TrainConfig::with_tol(1e-12)).unwrap();
        assert!((m.w[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn two_point_logistic_against_grid() {
        let ds = Dataset::from_dense(&[vec![1.0], vec![-1.0]], vec![1.0, -1.0], Task::Classification)
            .unwrap();
        let reg = Regularizer::l2(1.0);
        let m = train(&ds, &Loss::Logistic, &reg, &TrainConfig::with_tol(1e-10)).unwrap();
        assert!(m.relative_gap <= 1e-10);
        assert!(m.w[0] > 0.0);
        let pm = primal_objective(&ds, &Loss::Logistic, &reg, &m.w);
        for k in 0..=4000 {
            let w = k as f64 * 1e-3 - 2.0;
            assert!(pm <= primal_objective(&ds, &Loss::Logistic, &reg, &[w]) + 1e-12);
        }
    }

    #[test]
    fn warm_start_at_optimum_needs_no_iteration() {
        let ds = Dataset::from_dense(
            &[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, -1.0]],
            vec![1.0, -1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        let reg = Regularizer::l2(0.5);
        let cfg = TrainConfig::with_tol(1e-9);
        let m = train(&ds, &Loss::Logistic, &reg, &cfg).unwrap();
        let again = train(&ds, &Loss::Logistic, &reg, &TrainConfig::with_tol(1e-6).warm(&m.w)).unwrap();
        assert!(again.iterations <= 1);
    }

    #[test]
    fn predicates() {
        let ds = Dataset::from_dense(
            &[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, -1.0]],
            vec![1.0, -1.0, 1.0],
            Task::Classification,
        )
        .unwrap();
        let reg = Regularizer::l2(0.1);
        let cfg = TrainConfig::with_tol(1e-8);
        let first = train_with_stop_predicate(&ds, &Loss::Logistic, &reg, &cfg, |_, _, _| true).unwrap();
        assert_eq!(first.iterations, 0);
        assert_eq!(first.stop_reason, StopReason::Predicate);
        let never = train_with_stop_predicate(&ds, &Loss::Logistic, &reg, &cfg, |_, _, _| false).unwrap();
        let plain = train(&ds, &Loss::Logistic, &reg, &cfg).unwrap();
        assert_eq!(never.w, plain.w);
        assert_eq!(never.stop_reason, StopReason::Converged);
    }

    #[test]
    fn nonsmooth_and_intercept_solves() {
        let ds = Dataset::from_dense(
            &[
                vec![1.0, 0.5, 1.0],
                vec![-0.3, 2.0, 1.0],
                vec![0.7, -1.0, 1.0],
                vec![-1.2, 0.1, 1.0],
                vec![0.2, 0.2, 1.0],
            ],
            vec![1.0, -1.0, 1.0, -1.0, -1.0],
            Task::Classification,
        )
        .unwrap();
        let cases = [
            (Loss::Logistic, Regularizer::l1(0.05).with_intercept(2)),
            (Loss::SquaredHinge, Regularizer::elastic_net(0.1, 0.05)),
            (Loss::SmoothedHinge { gamma: 0.5 }, Regularizer::l2(0.1).with_intercept(2)),
            (Loss::Logistic, Regularizer::elastic_net(0.2, 0.02).with_intercept(2)),
        ];
        for (loss, reg) in cases {
            let m = train(&ds, &loss, &reg, &TrainConfig::with_tol(1e-11))
                .unwrap_or_else(|e| panic!("{loss:?} {reg:?}: {e}"));
            let gap = duality_gap(&ds, &loss, &reg, &m.w, &m.alpha);
            assert!(gap.is_finite() && gap >= -1e-12, "{loss:?} {reg:?} gap {gap}");
            assert!(m.relative_gap <= 1e-11);
        }
    }
}
