use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::in_pool;
use crate::bounds::{
    label_determination, predict_bounds_dual_scb, predict_bounds_primal_scb,
    primal_box_from_dual_ball, BoundKind, GapCertificate, Label,
};
use crate::convex::{Loss, Regularizer};
use crate::data::{complement, Dataset, ModificationSpec, SparseVec};
use crate::erm::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::gap::gap_for_modification;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModKind {
    RemoveInstances,
    AddInstances,
    RemoveFeatures,
    AddFeatures,
}

impl ModKind {
    pub const ALL: [ModKind; 4] = [
        ModKind::RemoveInstances,
        ModKind::AddInstances,
        ModKind::RemoveFeatures,
        ModKind::AddFeatures,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModKind::RemoveInstances => "remove-instances",
            ModKind::AddInstances => "add-instances",
            ModKind::RemoveFeatures => "remove-features",
            ModKind::AddFeatures => "add-features",
        }
    }

    fn on_features(&self) -> bool {
        matches!(self, ModKind::RemoveFeatures | ModKind::AddFeatures)
    }
}

impl std::str::FromStr for ModKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modification kind {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct TightnessConfig {
    pub lambdas: Vec<f64>,
    pub counts: Vec<usize>,
    pub kinds: Vec<ModKind>,
    pub bounds: Vec<BoundKind>,
    pub seed: u64,
    pub train: TrainConfig,
    pub tighten: bool,
    pub threads: Option<usize>,
}

impl Default for TightnessConfig {
    fn default() -> Self {
        TightnessConfig {
            lambdas: vec![1.0, 0.125, 0.015625],
            counts: (1..=10).collect(),
            kinds: vec![ModKind::RemoveInstances, ModKind::AddInstances],
            bounds: vec![BoundKind::PrimalScb, BoundKind::DualScb],
            seed: 0,
            train: TrainConfig::default(),
            tighten: true,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TightnessRow {
    pub lambda: f64,
    pub kind: ModKind,
    pub count: usize,
    pub bound: BoundKind,
    /// Fraction of test points whose interval excludes zero.
    pub rate: f64,
}

impl TightnessRow {
    pub fn csv(rows: &[TightnessRow]) -> String {
        let mut s = String::from("lambda,kind,count,bound,rate\n");
        for r in rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.lambda,
                r.kind.name(),
                r.count,
                r.bound.name(),
                r.rate
            );
        }
        s
    }
}

/// Label determination rates on `test` after modifying `train_ds` by each
/// requested number of instances or features.
///
/// Modified items are drawn from one seeded permutation so that the sets
/// are nested across counts. For additions, the largest requested count is
/// held out of the base problem and added back in order.
pub fn tightness_study(
    train_ds: &Dataset,
    test: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    cfg: &TightnessConfig,
) -> Result<Vec<TightnessRow>> {
    if train_ds.d() != test.d() {
        return Err(Error::Dimension(format!(
            "training set has {} features, test set has {}",
            train_ds.d(),
            test.d()
        )));
    }
    if test.n() == 0 {
        return Err(Error::Validation("empty test set".into()));
    }
    let bounds: Vec<BoundKind> = cfg
        .bounds
        .iter()
        .copied()
        .filter(|b| match b.check_assumptions(loss, reg) {
            Ok(()) => true,
            Err(e) => {
                log::warn!("skipping {}: {e}", b.name());
                false
            }
        })
        .collect();
    let max_count = cfg.counts.iter().copied().max().unwrap_or(0);

    let mut jobs = Vec::new();
    for &lambda in &cfg.lambdas {
        for &kind in &cfg.kinds {
            jobs.push((lambda, kind));
        }
    }
    let results: Vec<Result<Vec<TightnessRow>>> = in_pool(cfg.threads, || {
        jobs.par_iter()
            .map(|&(lambda, kind)| {
                let reg = reg.with_lambda(lambda);
                reg.validate()?;
                study_one(train_ds, test, loss, &reg, kind, max_count, &bounds, cfg)
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn study_one(
    train_ds: &Dataset,
    test: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    kind: ModKind,
    max_count: usize,
    bounds: &[BoundKind],
    cfg: &TightnessConfig,
) -> Result<Vec<TightnessRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut perm: Vec<usize> = if kind.on_features() {
        (0..train_ds.d()).filter(|&j| reg.intercept != Some(j)).collect()
    } else {
        (0..train_ds.n()).collect()
    };
    perm.shuffle(&mut rng);
    let limit = match kind {
        ModKind::RemoveInstances | ModKind::AddInstances => perm.len().saturating_sub(1),
        ModKind::RemoveFeatures | ModKind::AddFeatures if reg.intercept.is_some() => perm.len(),
        ModKind::RemoveFeatures | ModKind::AddFeatures => perm.len().saturating_sub(1),
    };
    if max_count > limit {
        return Err(Error::Config(format!(
            "cannot modify {max_count} items for {}, at most {limit} available",
            kind.name()
        )));
    }
    let pool = &perm[..max_count];

    // base problem, its test set and the modification for each count
    let (base_ds, base_test, base_reg): (Dataset, Dataset, Regularizer) = match kind {
        ModKind::RemoveInstances | ModKind::RemoveFeatures => (train_ds.clone(), test.clone(), *reg),
        ModKind::AddInstances => (
            train_ds.select_instances(&complement(pool, train_ds.n())),
            test.clone(),
            *reg,
        ),
        ModKind::AddFeatures => {
            let kept = complement(pool, train_ds.d());
            (
                train_ds.select_features(&kept),
                test.select_features(&kept),
                reg.after_feature_removal(pool),
            )
        }
    };
    let model = train(&base_ds, loss, &base_reg, &cfg.train)?;
    let test_for = |k: usize| -> Dataset {
        if kind == ModKind::AddFeatures && k > 0 {
            let cols: Vec<SparseVec> = pool[..k].iter().map(|&j| test.col(j).to_owned()).collect();
            ModificationSpec::AddFeatures { cols }
                .apply(&base_test)
                .expect("test columns match the test set")
        } else if kind == ModKind::RemoveFeatures && k > 0 {
            base_test.select_features(&complement(&pool[..k], base_test.d()))
        } else {
            base_test.clone()
        }
    };

    let mut rows = Vec::new();
    for &k in &cfg.counts {
        let t = test_for(k);
        let (cert, w_hat, alpha_hat, reg_new, ds_new) = if k == 0 {
            let cert = GapCertificate::for_problem(model.gap(), base_ds.n(), loss, &base_reg);
            (cert, model.w.clone(), model.alpha.clone(), base_reg, base_ds.clone())
        } else {
            let spec = modification(kind, &pool[..k], train_ds, &base_ds);
            let g = gap_for_modification(&model, &base_ds, &spec)?;
            let (w_hat, alpha_hat, reg_new) = g.candidate(&model);
            (*g.certificate(), w_hat, alpha_hat, reg_new, spec.apply(&base_ds)?)
        };
        for &b in bounds {
            let rate = determination_rate(&t, loss, &reg_new, &ds_new, &cert, &w_hat, &alpha_hat, b, cfg.tighten)?;
            rows.push(TightnessRow {
                lambda: reg.lambda(),
                kind,
                count: k,
                bound: b,
                rate,
            });
        }
    }
    Ok(rows)
}

fn modification(kind: ModKind, items: &[usize], full: &Dataset, base: &Dataset) -> ModificationSpec {
    match kind {
        ModKind::RemoveInstances => ModificationSpec::RemoveInstances(items.to_vec()),
        ModKind::RemoveFeatures => ModificationSpec::RemoveFeatures(items.to_vec()),
        ModKind::AddInstances => ModificationSpec::AddInstances {
            rows: items.iter().map(|&i| full.row(i).to_owned()).collect(),
            y: items.iter().map(|&i| full.y()[i]).collect(),
        },
        ModKind::AddFeatures => {
            debug_assert_eq!(full.n(), base.n());
            ModificationSpec::AddFeatures {
                cols: items.iter().map(|&j| full.col(j).to_owned()).collect(),
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn determination_rate(
    test: &Dataset,
    loss: &Loss,
    reg: &Regularizer,
    ds_new: &Dataset,
    cert: &GapCertificate,
    w_hat: &[f64],
    alpha_hat: &[f64],
    bound: BoundKind,
    tighten: bool,
) -> Result<f64> {
    let determined = match bound {
        BoundKind::PrimalScb => {
            let r = cert.radius_primal()?;
            (0..test.n())
                .filter(|&v| {
                    label_determination(predict_bounds_primal_scb(test.row(v), w_hat, r))
                        != Label::Undetermined
                })
                .count()
        }
        BoundKind::DualScb => {
            let r = cert.radius_dual()?;
            let boxes = primal_box_from_dual_ball(ds_new, loss, reg, alpha_hat, r, tighten);
            (0..test.n())
                .filter(|&v| {
                    label_determination(predict_bounds_dual_scb(test.row(v), &boxes))
                        != Label::Undetermined
                })
                .count()
        }
    };
    Ok(determined as f64 / test.n() as f64)
}
