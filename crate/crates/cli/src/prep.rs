use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glru::data::{drop_constant_features, load_libsvm, LibsvmOptions, Normalization, Scaler};
use glru::data::{Dataset, Task};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of an input file as recorded in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Source {
    pub path: PathBuf,
    pub sha256: String,
    pub n: usize,
    pub d: usize,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Reads a LIBSVM file with at least `min_features` columns.
pub fn load(path: &Path, task: Task, min_features: usize) -> Result<(Dataset, Source)> {
    let ds = load_libsvm(path, LibsvmOptions { task, min_features })?;
    let source = Source {
        path: path.to_path_buf(),
        sha256: file_sha256(path)?,
        n: ds.n(),
        d: ds.d(),
    };
    Ok((ds, source))
}

/// Preprocessing fitted on a training file and replayed on any other file
/// with the same raw feature space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prep {
    pub task: Task,
    pub normalize: Normalization,
    pub raw_features: usize,
    /// Raw columns kept after dropping constant ones; `None` keeps all.
    pub kept: Option<Vec<usize>>,
    pub scaler: Option<Scaler>,
    /// When set, a column of ones is appended as the last feature.
    pub intercept: bool,
}

impl Prep {
    pub fn fit(raw: &Dataset, normalize: Normalization, intercept: bool) -> Result<(Prep, Dataset)> {
        let mut prep = Prep {
            task: raw.task(),
            normalize,
            raw_features: raw.d(),
            kept: None,
            scaler: None,
            intercept,
        };
        if normalize != Normalization::None {
            let dropped = drop_constant_features(raw);
            if !dropped.dropped.is_empty() {
                log::info!("dropping {} constant features", dropped.dropped.len());
                prep.kept = Some(dropped.kept);
            }
            if dropped.dataset.d() == 0 {
                bail!("every feature is constant, nothing left to normalize");
            }
            prep.scaler = Some(Scaler::fit(&dropped.dataset, normalize)?);
        }
        let ds = prep.apply(raw)?;
        Ok((prep, ds))
    }

    pub fn apply(&self, raw: &Dataset) -> Result<Dataset> {
        if raw.d() != self.raw_features {
            bail!(
                "expected {} raw features, found {}",
                self.raw_features,
                raw.d()
            );
        }
        let mut ds = match &self.kept {
            Some(kept) => raw.select_features(kept),
            None => raw.clone(),
        };
        if let Some(scaler) = &self.scaler {
            ds = scaler.apply(&ds)?;
        }
        if self.intercept {
            ds = ds.with_intercept_column()?;
        }
        Ok(ds)
    }

    /// Loads a companion file (validation, test, rows to add) into the
    /// prepared feature space.
    pub fn load_companion(&self, path: &Path) -> Result<(Dataset, Source)> {
        let (raw, source) = load(path, self.task, self.raw_features)?;
        if raw.d() > self.raw_features {
            bail!(
                "{} has {} features, the training data has {}",
                path.display(),
                raw.d(),
                self.raw_features
            );
        }
        Ok((self.apply(&raw)?, source))
    }

    /// Index of the intercept column in the prepared data.
    pub fn intercept_index(&self, prepared_d: usize) -> Option<usize> {
        self.intercept.then(|| prepared_d - 1)
    }
}
