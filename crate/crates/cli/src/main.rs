mod prep;
mod report;

use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use glru::bounds::{BoundKind, GapCertificate};
use glru::convex::{Loss, Regularizer};
use glru::data::{complement, write_libsvm, Dataset, ModificationSpec, Normalization, Task};
use glru::erm::{train, SolverKind, TrainConfig, TrainedModel};
use glru::gap::{gap_for_modification, TouchCounter};
use glru::synth::synth_dataset;
use glru::workflows::{
    loocv_approx, loocv_glru, loocv_naive, stepwise_glru, stepwise_naive, tightness_study,
    LoocvConfig, LoocvReport, ModKind, StepwiseConfig, TightnessConfig, TightnessRow,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use prep::{load, Prep, Source};
use report::{emit, emit_json, Report};

#[derive(Parser)]
#[command(name = "glru", version, about = "Certified bounds for re-trained linear models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write it as JSON.
    Train(TrainArgs),
    /// Duality gap certificate for a modification of a trained model's data.
    Gap(GapArgs),
    /// Leave-one-out cross-validation error.
    Loocv(LoocvArgs),
    /// Backward stepwise feature elimination against a validation set.
    Stepwise(StepwiseArgs),
    /// Label determination rates after growing modifications.
    Tightness(TightnessArgs),
    /// Write a seeded synthetic classification dataset in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum LossName {
    Squared,
    Huber,
    SquaredHinge,
    SmoothedHinge,
    Logistic,
}

impl LossName {
    fn as_str(self) -> &'static str {
        match self {
            LossName::Squared => "squared",
            LossName::Huber => "huber",
            LossName::SquaredHinge => "squared-hinge",
            LossName::SmoothedHinge => "smoothed-hinge",
            LossName::Logistic => "logistic",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RegName {
    L2,
    L1,
    ElasticNet,
}

impl RegName {
    fn as_str(self) -> &'static str {
        match self {
            RegName::L2 => "l2",
            RegName::L1 => "l1",
            RegName::ElasticNet => "elastic-net",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum NormName {
    Dense,
    Sparse,
    None,
}

impl From<NormName> for Normalization {
    fn from(n: NormName) -> Self {
        match n {
            NormName::Dense => Normalization::Dense,
            NormName::Sparse => Normalization::Sparse,
            NormName::None => Normalization::None,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SolverName {
    Auto,
    Newton,
    CoordinateDescent,
}

impl From<SolverName> for SolverKind {
    fn from(s: SolverName) -> Self {
        match s {
            SolverName::Auto => SolverKind::Auto,
            SolverName::Newton => SolverKind::Newton,
            SolverName::CoordinateDescent => SolverKind::CoordinateDescent,
        }
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn nonnegative_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a nonnegative number, got {s}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s}")),
    }
}

fn bound_kind(s: &str) -> Result<BoundKind, String> {
    s.parse().map_err(|e: glru::Error| e.to_string())
}

fn mod_kind(s: &str) -> Result<ModKind, String> {
    s.parse().map_err(|e: glru::Error| e.to_string())
}

/// Modification sizes given as `a..b` (inclusive) or a comma separated list.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct Counts(Vec<usize>);

fn count_list(s: &str) -> Result<Counts, String> {
    count_values(s).map(Counts)
}

fn count_values(s: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| format!("bad range start in {s}"))?;
        let b: usize = b.trim().parse().map_err(|_| format!("bad range end in {s}"))?;
        if a > b {
            return Err(format!("empty range {s}"));
        }
        return Ok(RangeInclusive::new(a, b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad count {t:?}")))
        .collect()
}

/// Loss, regularizer and solver settings shared by every training command.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "logistic")]
    loss: LossName,
    /// Smoothing parameter of the huber and smoothed-hinge losses.
    #[arg(long, default_value = "1.0", allow_negative_numbers = true, value_parser = positive_f64)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "l2")]
    reg: RegName,
    #[arg(long, default_value = "1.0", allow_negative_numbers = true, value_parser = positive_f64)]
    lambda: f64,
    /// L1 weight of the elastic net.
    #[arg(long, default_value = "0.0", allow_negative_numbers = true, value_parser = nonnegative_f64)]
    kappa: f64,
    /// Append an unregularized all-ones feature.
    #[arg(long)]
    intercept: bool,
    #[arg(long, value_enum, default_value = "none")]
    normalize: NormName,
    /// Relative duality gap at which training stops.
    #[arg(long, default_value = "1e-6", allow_negative_numbers = true, value_parser = positive_f64)]
    tol: f64,
    #[arg(long, value_enum, default_value = "auto")]
    solver: SolverName,
    #[arg(long, default_value = "500", value_parser = positive_usize)]
    max_iter: usize,
}

impl ModelArgs {
    fn loss(&self) -> Result<Loss> {
        Ok(Loss::parse(self.loss.as_str(), self.gamma)?)
    }

    fn task(&self) -> Result<Task> {
        Ok(if self.loss()?.is_classification() {
            Task::Classification
        } else {
            Task::Regression
        })
    }

    fn regularizer(&self, prep: &Prep, d: usize) -> Result<Regularizer> {
        let reg = Regularizer::parse(self.reg.as_str(), self.lambda, self.kappa)?;
        Ok(match prep.intercept_index(d) {
            Some(b) => reg.with_intercept(b),
            None => reg,
        })
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rel_gap_tol: self.tol,
            max_iter: self.max_iter,
            solver: self.solver.into(),
            ..TrainConfig::default()
        }
    }

    /// Loads the training file and fits the preprocessing on it.
    fn load_training(&self, path: &Path) -> Result<(Prep, Dataset, Source)> {
        let (raw, source) = load(path, self.task()?, 0)?;
        let (prep, ds) = Prep::fit(&raw, self.normalize.into(), self.intercept)?;
        Ok((prep, ds, source))
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Training data in LIBSVM format.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Model file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("modification").required(true).multiple(false))]
struct GapArgs {
    /// Model written by `glru train`.
    #[arg(long)]
    model: PathBuf,
    /// Data file; defaults to the one recorded in the model.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Instances to remove (0-based, comma separated).
    #[arg(long, value_delimiter = ',', group = "modification")]
    remove_instance: Vec<usize>,
    /// Features to remove (0-based, after preprocessing, comma separated).
    #[arg(long, value_delimiter = ',', group = "modification")]
    remove_feature: Vec<usize>,
    /// LIBSVM file with instances to add.
    #[arg(long, group = "modification")]
    add_instances: Option<PathBuf>,
    /// LIBSVM file with one line per training instance holding the values of
    /// the new features; labels are ignored.
    #[arg(long, group = "modification")]
    add_features: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct LoocvArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Screen folds with certified bounds before training them.
    #[arg(long)]
    glru: bool,
    /// Bound used for screening; implies --glru.
    #[arg(long, value_parser = bound_kind)]
    bound: Option<BoundKind>,
    /// Stop fold training once the label is certified; implies --glru.
    #[arg(long)]
    early_stop: bool,
    /// One Newton step per fold instead of training (L2 only).
    #[arg(long, conflicts_with_all = ["glru", "bound", "early_stop"])]
    approx: bool,
    /// Skip domain tightening of the dual ball.
    #[arg(long)]
    no_tighten: bool,
    /// Start each fold from zero instead of the full-data model.
    #[arg(long)]
    no_warm_start: bool,
    /// Worker threads; all cores when omitted.
    #[arg(long, value_parser = positive_usize)]
    threads: Option<usize>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct StepwiseArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    glru: bool,
    /// Bound used on the validation set; implies --glru.
    #[arg(long, value_parser = bound_kind)]
    bound: Option<BoundKind>,
    #[arg(long)]
    no_tighten: bool,
    #[arg(long, value_parser = positive_usize)]
    max_steps: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    threads: Option<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TightnessArgs {
    #[arg(long)]
    data: PathBuf,
    /// Test points; without it the data is split in half at random.
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Modification sizes, `a..b` or a comma separated list.
    #[arg(long, default_value = "1..10", value_parser = count_list)]
    mods: Counts,
    #[arg(long, value_delimiter = ',', default_value = "1,0.125,0.015625", value_parser = positive_f64)]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "remove-instances,add-instances", value_parser = mod_kind)]
    kinds: Vec<ModKind>,
    #[arg(long, value_delimiter = ',', default_value = "primal-scb,dual-scb", value_parser = bound_kind)]
    bounds: Vec<BoundKind>,
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long)]
    no_tighten: bool,
    #[arg(long, value_parser = positive_usize)]
    threads: Option<usize>,
    /// CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON report with the same rows.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value = "0")]
    seed: u64,
    #[arg(long, default_value = "200", value_parser = positive_usize)]
    n: usize,
    #[arg(long, default_value = "20", value_parser = positive_usize)]
    d: usize,
    /// Probability that an entry is zero.
    #[arg(long, default_value = "0.0", allow_negative_numbers = true, value_parser = nonnegative_f64)]
    sparsity: f64,
    /// Shift of the class means along a random direction.
    #[arg(long, default_value = "1.0", allow_negative_numbers = true, value_parser = nonnegative_f64)]
    separation: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Contents of a model file.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: String,
    data: Source,
    model_args: ModelArgs,
    prep: Prep,
    train: TrainConfig,
    model: TrainedModel,
}

const MODEL_FORMAT: &str = "glru-model";

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<glru::Error>())
                .map_or(1, |g| g.code());
            ExitCode::from(code as u8)
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Gap(a) => cmd_gap(&a),
        Command::Loocv(a) => cmd_loocv(&a),
        Command::Stepwise(a) => cmd_stepwise(&a),
        Command::Tightness(a) => cmd_tightness(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (prep, ds, source) = a.model.load_training(&a.data)?;
    let loss = a.model.loss()?;
    let reg = a.model.regularizer(&prep, ds.d())?;
    let cfg = a.model.train_config();
    let model = train(&ds, &loss, &reg, &cfg)?;
    log::info!(
        "trained in {} iterations, relative gap {:.3e}",
        model.iterations,
        model.relative_gap
    );
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        data: source,
        model_args: a.model.clone(),
        prep,
        train: cfg,
        model,
    };
    emit_json(a.out.as_deref(), &file)
}

#[derive(Serialize)]
struct GapResult {
    kind: &'static str,
    size: usize,
    certificate: GapCertificate,
    radius_primal: Option<f64>,
    radius_dual: Option<f64>,
    touches: TouchCounter,
}

fn finite(r: glru::Result<f64>) -> Option<f64> {
    r.ok().filter(|v| v.is_finite())
}

fn cmd_gap(a: &GapArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let file: ModelFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.model.display()))?;
    ensure!(file.format == MODEL_FORMAT, "{} is not a model file", a.model.display());
    let path = a.data.clone().unwrap_or_else(|| file.data.path.clone());
    let (raw, source) = load(&path, file.prep.task, file.prep.raw_features)?;
    if source.sha256 != file.data.sha256 {
        bail!(
            "{} does not match the data the model was trained on (sha256 {} vs {})",
            path.display(),
            source.sha256,
            file.data.sha256
        );
    }
    let ds = file.prep.apply(&raw)?;
    ensure!(
        ds.n() == file.model.n() && ds.d() == file.model.d(),
        "model shape does not match the prepared data"
    );
    let mut inputs = vec![source];
    let spec = if !a.remove_instance.is_empty() {
        ModificationSpec::RemoveInstances(a.remove_instance.clone())
    } else if !a.remove_feature.is_empty() {
        ModificationSpec::RemoveFeatures(a.remove_feature.clone())
    } else if let Some(p) = &a.add_instances {
        let (extra, src) = file.prep.load_companion(p)?;
        inputs.push(src);
        ModificationSpec::AddInstances {
            rows: extra.x().owned_rows(),
            y: extra.y().to_vec(),
        }
    } else if let Some(p) = &a.add_features {
        let (extra, src) = load(p, Task::Regression, 0)?;
        inputs.push(src);
        ensure!(
            extra.n() == ds.n(),
            "{} has {} lines, the training data has {}",
            p.display(),
            extra.n(),
            ds.n()
        );
        ModificationSpec::AddFeatures {
            cols: (0..extra.d()).map(|j| extra.col(j).to_owned()).collect(),
        }
    } else {
        unreachable!("clap requires one modification")
    };
    let g = gap_for_modification(&file.model, &ds, &spec)?;
    let certificate = *g.certificate();
    let result = GapResult {
        kind: spec.kind(),
        size: spec.size(),
        certificate,
        radius_primal: finite(certificate.radius_primal()),
        radius_dual: finite(certificate.radius_dual()),
        touches: g.touches(),
    };
    emit_json(a.out.as_deref(), &Report::new("gap", a, inputs, result))
}

#[derive(Serialize)]
struct LoocvResult {
    /// Bound actually used for screening, absent for naive and approximate runs.
    bound: Option<BoundKind>,
    #[serde(flatten)]
    report: LoocvReport,
}

fn cmd_loocv(a: &LoocvArgs) -> Result<()> {
    let (prep, ds, source) = a.model.load_training(&a.data)?;
    let loss = a.model.loss()?;
    let reg = a.model.regularizer(&prep, ds.d())?;
    let glru = a.glru || a.bound.is_some() || a.early_stop;
    let cfg = LoocvConfig {
        train: a.model.train_config(),
        bound: a.bound.unwrap_or(default_bound(&reg)),
        early_stop: a.early_stop,
        tighten: !a.no_tighten,
        warm_start: !a.no_warm_start,
        threads: a.threads,
    };
    let report = if a.approx {
        loocv_approx(&ds, &loss, &reg, &cfg)?
    } else if glru {
        loocv_glru(&ds, &loss, &reg, &cfg)?
    } else {
        loocv_naive(&ds, &loss, &reg, &cfg)?
    };
    let result = LoocvResult {
        bound: (glru && !a.approx).then_some(cfg.bound),
        report,
    };
    log::info!(
        "{}: {} errors, {} trainings",
        result.report.method,
        result.report.error_count,
        result.report.trainings_performed
    );
    emit_json(a.report.as_deref(), &Report::new("loocv", a, vec![source], result))
}

fn default_bound(reg: &Regularizer) -> BoundKind {
    if reg.strong_convexity() > 0.0 {
        BoundKind::PrimalScb
    } else {
        BoundKind::DualScb
    }
}

fn cmd_stepwise(a: &StepwiseArgs) -> Result<()> {
    let (prep, train_ds, train_src) = a.model.load_training(&a.train)?;
    let (valid_ds, valid_src) = prep.load_companion(&a.valid)?;
    let loss = a.model.loss()?;
    let reg = a.model.regularizer(&prep, train_ds.d())?;
    let cfg = StepwiseConfig {
        train: a.model.train_config(),
        bound: a.bound,
        tighten: !a.no_tighten,
        threads: a.threads,
        max_steps: a.max_steps,
    };
    let result = if a.glru || a.bound.is_some() {
        stepwise_glru(&train_ds, &valid_ds, &loss, &reg, &cfg)?
    } else {
        stepwise_naive(&train_ds, &valid_ds, &loss, &reg, &cfg)?
    };
    emit_json(
        a.report.as_deref(),
        &Report::new("stepwise", a, vec![train_src, valid_src], result),
    )
}

fn cmd_tightness(a: &TightnessArgs) -> Result<()> {
    let loss = a.model.loss()?;
    let (prep, full, source) = a.model.load_training(&a.data)?;
    let mut inputs = vec![source];
    let (train_ds, test_ds) = match &a.test {
        Some(p) => {
            let (test, src) = prep.load_companion(p)?;
            inputs.push(src);
            (full, test)
        }
        None => {
            ensure!(full.n() >= 2, "need at least two instances to split");
            let mut idx: Vec<usize> = (0..full.n()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(a.seed));
            let half = &idx[..full.n() / 2];
            let mut test_idx = half.to_vec();
            test_idx.sort_unstable();
            let train_idx = complement(&test_idx, full.n());
            (full.select_instances(&train_idx), full.select_instances(&test_idx))
        }
    };
    let reg = a.model.regularizer(&prep, train_ds.d())?;
    let cfg = TightnessConfig {
        lambdas: a.lambdas.clone(),
        counts: a.mods.0.clone(),
        kinds: a.kinds.clone(),
        bounds: a.bounds.clone(),
        seed: a.seed,
        train: a.model.train_config(),
        tighten: !a.no_tighten,
        threads: a.threads,
    };
    let rows = tightness_study(&train_ds, &test_ds, &loss, &reg, &cfg)?;
    emit(a.out.as_deref(), &TightnessRow::csv(&rows))?;
    if let Some(p) = &a.report {
        emit_json(Some(p), &Report::new("tightness", a, inputs, rows))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let ds = synth_dataset(a.seed, a.n, a.d, a.sparsity, a.separation)?;
    emit(a.out.as_deref(), &write_libsvm(&ds))
}
