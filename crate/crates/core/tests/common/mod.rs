#![allow(dead_code)]

use std::io::Write;

use glru::convex::{Loss, Regularizer};
use glru::data::{Dataset, ModificationSpec, SparseMatrix, SparseVec, Task};
use glru::erm::{train, TrainConfig, TrainedModel};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Prints a line that is not swallowed by the test harness.
pub fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

pub fn verdict(criterion: u32, pass: bool, detail: &str) {
    report(&format!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    ));
}

pub const CLASSIFICATION_LOSSES: [Loss; 3] = [
    Loss::SquaredHinge,
    Loss::SmoothedHinge { gamma: 0.5 },
    Loss::Logistic,
];

pub const REGRESSION_LOSSES: [Loss; 2] = [Loss::Squared, Loss::Huber { gamma: 1.0 }];

pub fn all_losses() -> Vec<Loss> {
    CLASSIFICATION_LOSSES
        .iter()
        .chain(REGRESSION_LOSSES.iter())
        .copied()
        .collect()
}

/// Regularizers of the catalog; the intercept, when present, is the last
/// coordinate of a `d`-feature problem.
pub fn regularizers(lambda: f64, d: usize) -> Vec<Regularizer> {
    vec![
        Regularizer::l2(lambda),
        Regularizer::elastic_net(lambda, 0.5 * lambda),
        Regularizer::l1(lambda),
        Regularizer::l2(lambda).with_intercept(d - 1),
        Regularizer::l1(lambda).with_intercept(d - 1),
    ]
}

pub fn task_of(loss: &Loss) -> Task {
    if loss.is_classification() {
        Task::Classification
    } else {
        Task::Regression
    }
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random row with roughly `density` of the entries set.
pub fn random_row(rng: &mut ChaCha8Rng, d: usize, density: f64) -> SparseVec {
    let pairs: Vec<(usize, f64)> = (0..d)
        .filter_map(|j| rng.random_bool(density).then(|| (j, gauss(rng))))
        .collect();
    SparseVec::from_pairs(pairs).unwrap()
}

/// Linear-model data with label noise; with `intercept` the last column is
/// all ones.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    task: Task,
    density: f64,
    intercept: bool,
) -> Dataset {
    let p = if intercept { d - 1 } else { d };
    let truth: Vec<f64> = (0..p).map(|_| gauss(rng)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r = random_row(rng, p, density);
        let t = r.view().dot(&truth) + 0.5 * gauss(rng);
        let mut pairs: Vec<(usize, f64)> = r.view().iter().collect();
        if intercept {
            pairs.push((d - 1, 1.0));
        }
        rows.push(SparseVec::from_pairs(pairs).unwrap());
        y.push(match task {
            Task::Classification => {
                if t >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Task::Regression => t,
        });
    }
    Dataset::new(SparseMatrix::from_rows(&rows, d).unwrap(), y, task).unwrap()
}

pub fn random_label(rng: &mut ChaCha8Rng, task: Task) -> f64 {
    match task {
        Task::Classification => {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        }
        Task::Regression => gauss(rng),
    }
}

/// One random modification of `ds` of the given kind (0..4) and size.
pub fn random_modification(
    rng: &mut ChaCha8Rng,
    ds: &Dataset,
    reg: &Regularizer,
    kind: usize,
    size: usize,
) -> ModificationSpec {
    match kind {
        0 => {
            let mut idx: Vec<usize> = (0..ds.n()).collect();
            idx.shuffle(rng);
            idx.truncate(size.min(ds.n() - 1));
            ModificationSpec::RemoveInstances(idx)
        }
        1 => {
            let rows = (0..size)
                .map(|_| {
                    let r = random_row(rng, ds.d(), 0.7);
                    match reg.intercept {
                        Some(b) => {
                            let mut pairs: Vec<(usize, f64)> =
                                r.view().iter().filter(|&(j, _)| j != b).collect();
                            pairs.push((b, 1.0));
                            SparseVec::from_pairs(pairs).unwrap()
                        }
                        None => r,
                    }
                })
                .collect();
            let y = (0..size).map(|_| random_label(rng, ds.task())).collect();
            ModificationSpec::AddInstances { rows, y }
        }
        2 => {
            let mut idx: Vec<usize> = (0..ds.d()).filter(|&j| reg.intercept != Some(j)).collect();
            idx.shuffle(rng);
            idx.truncate(size.min(ds.d() - 1));
            ModificationSpec::RemoveFeatures(idx)
        }
        _ => {
            let cols = (0..size).map(|_| random_row(rng, ds.n(), 0.7)).collect();
            ModificationSpec::AddFeatures { cols }
        }
    }
}

/// Regularizer of the modified problem.
pub fn modified_regularizer(reg: &Regularizer, spec: &ModificationSpec) -> Regularizer {
    match spec {
        ModificationSpec::RemoveFeatures(idx) => reg.after_feature_removal(idx),
        _ => *reg,
    }
}

pub fn precise() -> TrainConfig {
    TrainConfig {
        rel_gap_tol: 1e-12,
        max_iter: 2000,
        max_epochs: 2_000_000,
        ..TrainConfig::default()
    }
}

pub fn solve(ds: &Dataset, loss: &Loss, reg: &Regularizer, tol: f64) -> TrainedModel {
    let cfg = TrainConfig {
        rel_gap_tol: tol,
        ..precise()
    };
    train(ds, loss, reg, &cfg).unwrap_or_else(|e| panic!("training failed: {e}"))
}

/// One-sided exact binomial test: `P(X ≥ k)` for `X ~ Bin(m, 1/2)`.
pub fn sign_test_p(k: usize, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in k..=m {
        total += binom(m, j);
    }
    total / 2f64.powi(m as i32)
}

fn binom(m: usize, j: usize) -> f64 {
    let mut c = 1.0;
    for t in 0..j {
        c = c * (m - t) as f64 / (t + 1) as f64;
    }
    c
}

/// Relative difference against a scale.
pub fn rel_diff(a: f64, b: f64, scale: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / scale.abs().max(1e-300)
}
