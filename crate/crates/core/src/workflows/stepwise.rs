use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{error_count, in_pool, training_error};
use crate::bounds::{coordinate_box, label_determination, BoundKind, ColumnAggregates, Label};
use crate::convex::{maxlin, minlin, Interval, Loss, Regularizer};
use crate::data::{Dataset, Task};
use crate::erm::{train, TrainConfig, TrainedModel};
use crate::error::{Error, Result};
use crate::gap::{gap_feature_removal, gap_feature_removal_l2};

#[derive(Debug, Clone)]
pub struct StepwiseConfig {
    pub train: TrainConfig,
    /// Bound used on the validation set; `None` picks primal-scb when the
    /// regularizer is strongly convex and dual-scb otherwise.
    pub bound: Option<BoundKind>,
    pub tighten: bool,
    pub threads: Option<usize>,
    pub max_steps: Option<usize>,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        StepwiseConfig {
            train: TrainConfig::default(),
            bound: None,
            tighten: true,
            threads: None,
            max_steps: None,
        }
    }
}

impl StepwiseConfig {
    pub fn resolved_bound(&self, reg: &Regularizer) -> BoundKind {
        self.bound.unwrap_or(if reg.strong_convexity() > 0.0 {
            BoundKind::PrimalScb
        } else {
            BoundKind::DualScb
        })
    }
}

/// Per-candidate counters of one elimination step. `c`, `i`, `z` count
/// validation instances certified correct, certified wrong and
/// undetermined; `e` is the validation error after training.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateReport {
    pub feature: usize,
    pub c: Option<usize>,
    pub i: Option<usize>,
    pub z: Option<usize>,
    pub e: Option<usize>,
    pub trained: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub active: Vec<usize>,
    pub e_null: usize,
    pub e_best: Option<usize>,
    pub best: Option<usize>,
    pub removed: Option<usize>,
    /// Candidates skipped because their bound ruled them out.
    pub candidates_screened: usize,
    pub candidates_trained: usize,
    pub candidates: Vec<CandidateReport>,
    pub time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepwiseReport {
    pub method: String,
    pub bound: Option<BoundKind>,
    /// Removed features in removal order (original indices).
    pub selected: Vec<usize>,
    pub final_set: Vec<usize>,
    pub per_step: Vec<StepReport>,
    pub trainings_performed: usize,
    pub total_time_secs: f64,
}

fn check_inputs(train_ds: &Dataset, valid_ds: &Dataset, reg: &Regularizer) -> Result<()> {
    if train_ds.task() != Task::Classification || valid_ds.task() != Task::Classification {
        return Err(Error::Config(
            "stepwise elimination needs classification datasets".into(),
        ));
    }
    if train_ds.d() != valid_ds.d() {
        return Err(Error::Dimension(format!(
            "training set has {} features, validation set has {}",
            train_ds.d(),
            valid_ds.d()
        )));
    }
    if let Some(b) = reg.intercept {
        if b >= train_ds.d() {
            return Err(Error::Config(format!("intercept coordinate {b} out of range")));
        }
    }
    Ok(())
}

/// Problem restricted to the active features.
struct Active<'a> {
    features: Vec<usize>,
    train: Dataset,
    valid: Dataset,
    reg: Regularizer,
    loss: &'a Loss,
}

impl<'a> Active<'a> {
    fn new(train_ds: &Dataset, valid_ds: &Dataset, loss: &'a Loss, reg: &Regularizer, features: Vec<usize>) -> Self {
        let intercept = reg
            .intercept
            .and_then(|b| features.iter().position(|&f| f == b));
        Active {
            train: train_ds.select_features(&features),
            valid: valid_ds.select_features(&features),
            reg: Regularizer {
                kind: reg.kind,
                intercept,
            },
            loss,
            features,
        }
    }

    /// Local positions of the removable features, in ascending original
    /// index.
    fn candidates(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&p| self.reg.intercept != Some(p))
            .collect()
    }

    fn train_without(&self, p: usize, base: &TrainedModel, cfg: &TrainConfig) -> Result<(TrainedModel, usize)> {
        let keep: Vec<usize> = (0..self.features.len()).filter(|&k| k != p).collect();
        let ds = self.train.select_features(&keep);
        let valid = self.valid.select_features(&keep);
        let reg = self.reg.after_feature_removal(&[p]);
        let warm: Vec<f64> = keep.iter().map(|&k| base.w[k]).collect();
        let model = train(&ds, self.loss, &reg, &cfg.warm(&warm))
            .map_err(|e| training_error(format!("candidate feature {}", self.features[p]), e))?;
        let e = error_count(&valid, &model.w);
        Ok((model, e))
    }
}

fn better(e: usize, j: usize, best: Option<(usize, usize)>) -> bool {
    match best {
        None => true,
        Some((eb, jb)) => e < eb || (e == eb && j < jb),
    }
}

/// Greedy backward elimination that trains every candidate removal.
pub fn stepwise_naive(
    train_ds: &Dataset,
    valid_ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &StepwiseConfig,
) -> Result<StepwiseReport> {
    check_inputs(train_ds, valid_ds, reg)?;
    run(train_ds, valid_ds, loss, reg, cfg, None)
}

/// Greedy backward elimination that skips candidates whose certified
/// validation errors already rule them out.
pub fn stepwise_glru(
    train_ds: &Dataset,
    valid_ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &StepwiseConfig,
) -> Result<StepwiseReport> {
    check_inputs(train_ds, valid_ds, reg)?;
    let bound = cfg.resolved_bound(reg);
    bound
        .check_assumptions(loss, reg)
        .map_err(|e| Error::Config(e.to_string()))?;
    run(train_ds, valid_ds, loss, reg, cfg, Some(bound))
}

fn run(
    train_ds: &Dataset,
    valid_ds: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &StepwiseConfig,
    bound: Option<BoundKind>,
) -> Result<StepwiseReport> {
    let start = Instant::now();
    let mut active = Active::new(train_ds, valid_ds, loss, reg, (0..train_ds.d()).collect());
    let mut base = train(&active.train, loss, &active.reg, &cfg.train)
        .map_err(|e| training_error("initial model".into(), e))?;
    let mut trainings = 1;
    let mut e_null = error_count(&active.valid, &base.w);
    let mut selected = Vec::new();
    let mut per_step = Vec::new();

    loop {
        if cfg.max_steps.is_some_and(|m| per_step.len() >= m) {
            break;
        }
        let candidates = active.candidates();
        if candidates.is_empty() {
            break;
        }
        let t0 = Instant::now();
        let (reports, best) = match bound {
            None => naive_step(&active, &base, &candidates, cfg)?,
            Some(kind) => glru_step(&active, &base, &candidates, cfg, kind)?,
        };
        let trained = reports.iter().filter(|r| r.trained).count();
        trainings += trained;
        let e_best = best.as_ref().map(|b| b.1);
        let improve = best.as_ref().is_some_and(|b| b.1 < e_null);
        let mut step = StepReport {
            active: active.features.clone(),
            e_null,
            e_best,
            best: best.as_ref().map(|b| active.features[b.0]),
            removed: None,
            candidates_screened: candidates.len() - trained,
            candidates_trained: trained,
            candidates: reports,
            time_secs: 0.0,
        };
        if improve {
            let (p, e, model) = best.expect("improvement implies a best candidate");
            let feature = active.features[p];
            step.removed = Some(feature);
            selected.push(feature);
            let mut features = active.features.clone();
            features.remove(p);
            active = Active::new(train_ds, valid_ds, loss, reg, features);
            base = model;
            e_null = e;
        }
        step.time_secs = t0.elapsed().as_secs_f64();
        per_step.push(step);
        if !improve {
            break;
        }
    }
    Ok(StepwiseReport {
        method: if bound.is_some() { "glru" } else { "naive" }.into(),
        bound,
        selected,
        final_set: active.features.clone(),
        per_step,
        trainings_performed: trainings,
        total_time_secs: start.elapsed().as_secs_f64(),
    })
}

type Best = Option<(usize, usize, TrainedModel)>;

fn naive_step(
    active: &Active<'_>,
    base: &TrainedModel,
    candidates: &[usize],
    cfg: &StepwiseConfig,
) -> Result<(Vec<CandidateReport>, Best)> {
    let results: Vec<Result<(TrainedModel, usize)>> = in_pool(cfg.threads, || {
        candidates
            .par_iter()
            .map(|&p| active.train_without(p, base, &cfg.train))
            .collect()
    })?;
    let mut reports = Vec::with_capacity(candidates.len());
    let mut best: Best = None;
    for (&p, r) in candidates.iter().zip(results) {
        let (model, e) = r?;
        reports.push(CandidateReport {
            feature: active.features[p],
            c: None,
            i: None,
            z: None,
            e: Some(e),
            trained: true,
        });
        if better(e, p, best.as_ref().map(|b| (b.1, b.0))) {
            best = Some((p, e, model));
        }
    }
    Ok((reports, best))
}

#[derive(Debug, Clone, Copy)]
struct Counters {
    c: usize,
    i: usize,
    z: usize,
}

fn glru_step(
    active: &Active<'_>,
    base: &TrainedModel,
    candidates: &[usize],
    cfg: &StepwiseConfig,
    kind: BoundKind,
) -> Result<(Vec<CandidateReport>, Best)> {
    let agg = match kind {
        BoundKind::DualScb => Some(ColumnAggregates::new(&active.train, active.loss, &base.alpha, cfg.tighten)),
        BoundKind::PrimalScb => None,
    };
    let counters: Vec<Result<Counters>> = in_pool(cfg.threads, || {
        candidates
            .par_iter()
            .map(|&p| screen_candidate(active, base, p, kind, agg.as_ref()))
            .collect()
    })?;
    let counters = counters.into_iter().collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&k| (counters[k].i, candidates[k]));
    let mut e_vals: Vec<Option<usize>> = vec![None; candidates.len()];
    let mut best: Best = None;
    for &k in &order {
        let p = candidates[k];
        let lower = counters[k].i;
        if let Some((pb, eb, _)) = &best {
            if lower > *eb {
                break;
            }
            if lower == *eb && p > *pb {
                continue;
            }
        }
        let (model, e) = active.train_without(p, base, &cfg.train)?;
        e_vals[k] = Some(e);
        if better(e, p, best.as_ref().map(|b| (b.1, b.0))) {
            best = Some((p, e, model));
        }
    }
    let reports = candidates
        .iter()
        .enumerate()
        .map(|(k, &p)| CandidateReport {
            feature: active.features[p],
            c: Some(counters[k].c),
            i: Some(counters[k].i),
            z: Some(counters[k].z),
            e: e_vals[k],
            trained: e_vals[k].is_some(),
        })
        .collect();
    Ok((reports, best))
}

/// Certified validation outcomes after removing local feature `p`.
fn screen_candidate(
    active: &Active<'_>,
    base: &TrainedModel,
    p: usize,
    kind: BoundKind,
    agg: Option<&ColumnAggregates>,
) -> Result<Counters> {
    let valid = &active.valid;
    let undetermined = Counters {
        c: 0,
        i: 0,
        z: valid.n(),
    };
    if active.features.len() < 2 {
        return Ok(undetermined);
    }
    let cert = if active.reg.is_plain_l2() {
        gap_feature_removal_l2(base, &active.train, p)?.0
    } else {
        gap_feature_removal(base, &active.train, &[p])?.certificate
    };
    let mut out = Counters { c: 0, i: 0, z: 0 };
    let mut tally = |bound: Interval, y: f64| match label_determination(bound) {
        Label::Undetermined => out.z += 1,
        Label::Positive if y > 0.0 => out.c += 1,
        Label::Negative if y < 0.0 => out.c += 1,
        _ => out.i += 1,
    };
    match kind {
        BoundKind::PrimalScb => {
            let r = cert.radius_primal()?;
            let wp = base.w[p];
            for v in 0..valid.n() {
                let row = valid.row(v);
                let xp = row.get(p);
                let center = row.dot(&base.w) - xp * wp;
                let norm = (valid.instance_norm(v).powi(2) - xp * xp).max(0.0).sqrt();
                let s = if norm == 0.0 { 0.0 } else { r * norm };
                tally(Interval::new(center - s, center + s), valid.y()[v]);
            }
        }
        BoundKind::DualScb => {
            let agg = agg.expect("dual-scb screening needs column aggregates");
            let r = cert.radius_dual()?;
            let n = active.train.n();
            let boxes: Vec<Interval> = (0..active.features.len())
                .map(|k| {
                    if k == p {
                        Interval::point(0.0)
                    } else {
                        coordinate_box(&active.reg, k, agg.f_interval(&active.reg, k, r, None), n)
                    }
                })
                .collect();
            for v in 0..valid.n() {
                let row = valid.row(v);
                let (mut lo, mut hi, mut c) = (Vec::new(), Vec::new(), Vec::new());
                for (k, x) in row.iter() {
                    if k != p {
                        lo.push(boxes[k].lo);
                        hi.push(boxes[k].hi);
                        c.push(x);
                    }
                }
                let bound = Interval {
                    lo: minlin(&lo, &hi, &c),
                    hi: maxlin(&lo, &hi, &c),
                };
                tally(bound, valid.y()[v]);
            }
        }
    }
    Ok(out)
}
