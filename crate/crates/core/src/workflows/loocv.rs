use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{in_pool, sign, training_error};
use crate::bounds::{
    coordinate_box, f_bounds, label_determination,
    predict_bounds_primal_scb, BoundKind, ColumnAggregates, GapCertificate, Label,
};
use crate::convex::{maxlin, minlin, Interval, Loss, Regularizer};
use crate::data::{complement, Dataset, Task};
use crate::erm::{train, train_with_stop_predicate, StopReason, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::gap::{gap_instance_removal, gap_loocv_l2};

#[derive(Debug, Clone)]
pub struct LoocvConfig {
    pub train: TrainConfig,
    pub bound: BoundKind,
    /// Stop fold training as soon as the held-out label is certified.
    pub early_stop: bool,
    /// Intersect the dual ball with the loss and regularizer domains.
    pub tighten: bool,
    /// Warm-start every fold from the full-data model.
    pub warm_start: bool,
    pub threads: Option<usize>,
}

impl Default for LoocvConfig {
    fn default() -> Self {
        LoocvConfig {
            train: TrainConfig::default(),
            bound: BoundKind::PrimalScb,
            early_stop: false,
            tighten: true,
            warm_start: true,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldStatus {
    DeterminedCorrect,
    DeterminedError,
    Trained,
    Approximated,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub index: usize,
    pub status: FoldStatus,
    /// Interval known to contain the held-out margin.
    pub bound: Interval,
    /// Predicted label, `sign(0) = +1`.
    pub predicted: f64,
    pub correct: bool,
    pub stopped_early: bool,
    pub iterations: usize,
    pub train_time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoocvReport {
    pub method: String,
    pub n: usize,
    pub error_count: usize,
    pub trainings_performed: usize,
    pub base_relative_gap: f64,
    pub gap_time_total_secs: f64,
    pub total_time_secs: f64,
    pub per_instance: Vec<FoldOutcome>,
}

impl LoocvReport {
    pub fn determined(&self) -> usize {
        self.per_instance
            .iter()
            .filter(|f| {
                matches!(
                    f.status,
                    FoldStatus::DeterminedCorrect | FoldStatus::DeterminedError
                )
            })
            .count()
    }
}

fn check_inputs(ds: &Dataset) -> Result<()> {
    if ds.task() != Task::Classification {
        return Err(Error::Config("LOOCV needs a classification dataset".into()));
    }
    if ds.n() < 2 {
        return Err(Error::Domain("LOOCV needs at least two instances".into()));
    }
    Ok(())
}

pub(crate) fn base_model(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    train(ds, loss, reg, cfg).map_err(|e| training_error("full-data model".into(), e))
}

fn fold_config(cfg: &LoocvConfig, base: &TrainedModel) -> TrainConfig {
    if cfg.warm_start {
        cfg.train.warm(&base.w)
    } else {
        TrainConfig {
            warm_start: None,
            ..cfg.train.clone()
        }
    }
}

/// Leave-one-out error by retraining every fold.
pub fn loocv_naive(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &LoocvConfig,
) -> Result<LoocvReport> {
    check_inputs(ds)?;
    let start = Instant::now();
    let base = base_model(ds, loss, reg, &cfg.train)?;
    let tc = fold_config(cfg, &base);
    let folds: Vec<Result<FoldOutcome>> = in_pool(cfg.threads, || {
        (0..ds.n())
            .into_par_iter()
            .map(|i| train_fold(ds, loss, reg, &tc, i, None))
            .collect()
    })?;
    let per_instance = folds.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(finish("naive", ds, &base, per_instance, 0.0, start))
}

/// Leave-one-out error with folds screened by certified prediction bounds.
pub fn loocv_glru(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &LoocvConfig,
) -> Result<LoocvReport> {
    cfg.bound
        .check_assumptions(loss, reg)
        .map_err(|e| Error::Config(e.to_string()))?;
    check_inputs(ds)?;
    let start = Instant::now();
    let base = base_model(ds, loss, reg, &cfg.train)?;
    let tc = fold_config(cfg, &base);
    let agg = match cfg.bound {
        BoundKind::DualScb => Some(ColumnAggregates::new(ds, loss, &base.alpha, cfg.tighten)),
        BoundKind::PrimalScb => None,
    };
    let results: Vec<Result<(FoldOutcome, f64)>> = in_pool(cfg.threads, || {
        (0..ds.n())
            .into_par_iter()
            .map(|i| {
                let t0 = Instant::now();
                let bound = screen_fold(ds, &base, cfg.bound, agg.as_ref(), i)?;
                let gap_time = t0.elapsed().as_secs_f64();
                let y = ds.y()[i];
                let outcome = match label_determination(bound) {
                    Label::Undetermined => {
                        let early = cfg.early_stop.then_some((cfg.bound, cfg.tighten));
                        let mut f = train_fold(ds, loss, reg, &tc, i, early)?;
                        f.bound = bound;
                        f
                    }
                    label => {
                        let predicted = if label == Label::Positive { 1.0 } else { -1.0 };
                        let correct = predicted == y;
                        FoldOutcome {
                            index: i,
                            status: if correct {
                                FoldStatus::DeterminedCorrect
                            } else {
                                FoldStatus::DeterminedError
                            },
                            bound,
                            predicted,
                            correct,
                            stopped_early: false,
                            iterations: 0,
                            train_time_secs: 0.0,
                        }
                    }
                };
                Ok((outcome, gap_time))
            })
            .collect()
    })?;
    let mut per_instance = Vec::with_capacity(ds.n());
    let mut gap_time = 0.0;
    for r in results {
        let (f, t) = r?;
        per_instance.push(f);
        gap_time += t;
    }
    Ok(finish("glru", ds, &base, per_instance, gap_time, start))
}

fn finish(
    method: &str,
    ds: &Dataset,
    base: &TrainedModel,
    per_instance: Vec<FoldOutcome>,
    gap_time: f64,
    start: Instant,
) -> LoocvReport {
    LoocvReport {
        method: method.into(),
        n: ds.n(),
        error_count: per_instance.iter().filter(|f| !f.correct).count(),
        trainings_performed: per_instance
            .iter()
            .filter(|f| f.status == FoldStatus::Trained)
            .count(),
        base_relative_gap: base.relative_gap,
        gap_time_total_secs: gap_time,
        total_time_secs: start.elapsed().as_secs_f64(),
        per_instance,
    }
}

/// Bound on `X_i w*(-i)` from the full-data model.
fn screen_fold(
    ds: &Dataset,
    base: &TrainedModel,
    bound: BoundKind,
    agg: Option<&ColumnAggregates>,
    i: usize,
) -> Result<Interval> {
    let cert = if base.reg.is_plain_l2() {
        gap_loocv_l2(base, ds, i)?.0
    } else {
        gap_instance_removal(base, ds, &[i])?.certificate
    };
    let row = ds.row(i);
    match (bound, agg) {
        (BoundKind::DualScb, Some(agg)) => {
            let r_d = cert.radius_dual()?;
            let a_i = base.alpha[i];
            let b_i = base.loss.dual_box(ds.y()[i]);
            let n_new = ds.n() - 1;
            let boxes: Vec<(usize, f64, Interval)> = row
                .iter()
                .map(|(j, x)| {
                    let f = agg.f_interval(&base.reg, j, r_d, Some((x, a_i, b_i)));
                    (j, x, coordinate_box(&base.reg, j, f, n_new))
                })
                .collect();
            Ok(interval_over_boxes(&boxes))
        }
        _ => Ok(predict_bounds_primal_scb(row, &base.w, cert.radius_primal()?)),
    }
}

fn interval_over_boxes(boxes: &[(usize, f64, Interval)]) -> Interval {
    let lo: Vec<f64> = boxes.iter().map(|b| b.2.lo).collect();
    let hi: Vec<f64> = boxes.iter().map(|b| b.2.hi).collect();
    let c: Vec<f64> = boxes.iter().map(|b| b.1).collect();
    Interval {
        lo: minlin(&lo, &hi, &c),
        hi: maxlin(&lo, &hi, &c),
    }
}

/// Trains fold `i`; with `early` set, stops once the held-out label is
/// certified from the current iterate.
fn train_fold(
    ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    tc: &TrainConfig,
    i: usize,
    early: Option<(BoundKind, bool)>,
) -> Result<FoldOutcome> {
    let t0 = Instant::now();
    let fold = ds.select_instances(&complement(&[i], ds.n()));
    let row = ds.row(i);
    let y = ds.y()[i];
    let mut certified: Option<f64> = None;
    let model = match early {
        None => train(&fold, loss, reg, tc),
        Some((kind, tighten)) => train_with_stop_predicate(&fold, loss, reg, tc, |w, alpha, gap| {
            let cert = GapCertificate::for_problem(gap, fold.n(), loss, reg);
            let bound = match kind {
                BoundKind::PrimalScb => match cert.radius_primal() {
                    Ok(r) => predict_bounds_primal_scb(row, w, r),
                    Err(_) => return false,
                },
                BoundKind::DualScb => match cert.radius_dual() {
                    Ok(r) => {
                        let boxes: Vec<(usize, f64, Interval)> = row
                            .iter()
                            .map(|(j, x)| {
                                let f = f_bounds(&fold, loss, reg, alpha, r, j, tighten);
                                (j, x, coordinate_box(reg, j, f, fold.n()))
                            })
                            .collect();
                        interval_over_boxes(&boxes)
                    }
                    Err(_) => return false,
                },
            };
            match label_determination(bound) {
                Label::Positive => certified = Some(1.0),
                Label::Negative => certified = Some(-1.0),
                Label::Undetermined => return false,
            }
            true
        }),
    }
    .map_err(|e| training_error(format!("fold {i}"), e))?;
    let margin = row.dot(&model.w);
    let stopped_early = model.stop_reason == StopReason::Predicate;
    let predicted = match certified {
        Some(p) if stopped_early => p,
        _ => sign(margin),
    };
    Ok(FoldOutcome {
        index: i,
        status: FoldStatus::Trained,
        bound: Interval::point(margin),
        predicted,
        correct: predicted == y,
        stopped_early,
        iterations: model.iterations,
        train_time_secs: t0.elapsed().as_secs_f64(),
    })
}
