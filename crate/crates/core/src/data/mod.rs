//! Datasets, modifications, LIBSVM ingestion and feature normalization.

mod libsvm;
pub mod matrix;
mod normalize;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use libsvm::{load_libsvm, parse_libsvm, write_libsvm, LibsvmOptions};
pub use matrix::{SparseMatrix, SparseVec, SparseVecView};
pub use normalize::{drop_constant_features, normalize, ConstantDrop, Normalization, Scaler};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// Design matrix plus outcomes, with cached row and column norms.
///
/// Immutable after construction; every modification builds a new value.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: SparseMatrix,
    y: Vec<f64>,
    task: Task,
    instance_norms: Vec<f64>,
    feature_norms: Vec<f64>,
}

impl Dataset {
    pub fn new(x: SparseMatrix, y: Vec<f64>, task: Task) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                x.n_rows(),
                y.len()
            )));
        }
        for (i, &yi) in y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::Validation(format!("label {i} is not finite")));
            }
            if task == Task::Classification && yi != 1.0 && yi != -1.0 {
                return Err(Error::Validation(format!(
                    "instance {i} has label {yi}; classification expects -1 or +1"
                )));
            }
        }
        for i in 0..x.n_rows() {
            if x.row(i).values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("instance {i} has a non-finite feature")));
            }
        }
        let instance_norms = (0..x.n_rows()).map(|i| x.row(i).norm()).collect();
        let feature_norms = (0..x.n_cols()).map(|j| x.col(j).norm()).collect();
        Ok(Dataset {
            x,
            y,
            task,
            instance_norms,
            feature_norms,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>], y: Vec<f64>, task: Task) -> Result<Self> {
        Self::new(SparseMatrix::from_dense(rows)?, y, task)
    }

    pub fn x(&self) -> &SparseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn d(&self) -> usize {
        self.x.n_cols()
    }

    pub fn row(&self, i: usize) -> SparseVecView<'_> {
        self.x.row(i)
    }

    pub fn col(&self, j: usize) -> SparseVecView<'_> {
        self.x.col(j)
    }

    pub fn instance_norm(&self, i: usize) -> f64 {
        self.instance_norms[i]
    }

    pub fn feature_norm(&self, j: usize) -> f64 {
        self.feature_norms[j]
    }

    pub fn instance_norms(&self) -> &[f64] {
        &self.instance_norms
    }

    pub fn feature_norms(&self) -> &[f64] {
        &self.feature_norms
    }

    pub fn select_instances(&self, keep: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(keep),
            y: keep.iter().map(|&i| self.y[i]).collect(),
            task: self.task,
            instance_norms: keep.iter().map(|&i| self.instance_norms[i]).collect(),
            feature_norms: Vec::new(),
        }
        .with_feature_norms()
    }

    pub fn select_features(&self, keep: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_cols(keep),
            y: self.y.clone(),
            task: self.task,
            instance_norms: Vec::new(),
            feature_norms: keep.iter().map(|&j| self.feature_norms[j]).collect(),
        }
        .with_instance_norms()
    }

    fn with_feature_norms(mut self) -> Self {
        self.feature_norms = (0..self.x.n_cols()).map(|j| self.x.col(j).norm()).collect();
        self
    }

    fn with_instance_norms(mut self) -> Self {
        self.instance_norms = (0..self.x.n_rows()).map(|i| self.x.row(i).norm()).collect();
        self
    }

    /// Appends a constant column of ones (the intercept feature) as the last column.
    pub fn with_intercept_column(&self) -> Result<Dataset> {
        let ones = SparseVec {
            indices: (0..self.n()).collect(),
            values: vec![1.0; self.n()],
        };
        ModificationSpec::AddFeatures { cols: vec![ones] }.apply(self)
    }

    /// Pads the feature dimension with empty columns up to `d`.
    pub fn with_dimension(&self, d: usize) -> Result<Dataset> {
        if d < self.d() {
            return Err(Error::Dimension(format!(
                "cannot shrink {} features to {d}",
                self.d()
            )));
        }
        if d == self.d() {
            return Ok(self.clone());
        }
        Dataset::new(
            SparseMatrix::from_rows(&self.x.owned_rows(), d)?,
            self.y.clone(),
            self.task,
        )
    }

    /// SHA-256 over a canonical byte encoding of the matrix and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.d() as u64).to_le_bytes());
        for i in 0..self.n() {
            h.update(self.y[i].to_le_bytes());
            let r = self.row(i);
            h.update((r.nnz() as u64).to_le_bytes());
            for (j, v) in r.iter() {
                h.update((j as u64).to_le_bytes());
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One of the four dataset modifications a certificate can be computed for.
#[derive(Debug, Clone, PartialEq)]
pub enum ModificationSpec {
    RemoveInstances(Vec<usize>),
    AddInstances { rows: Vec<SparseVec>, y: Vec<f64> },
    RemoveFeatures(Vec<usize>),
    AddFeatures { cols: Vec<SparseVec> },
}

impl ModificationSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModificationSpec::RemoveInstances(_) => "remove-instances",
            ModificationSpec::AddInstances { .. } => "add-instances",
            ModificationSpec::RemoveFeatures(_) => "remove-features",
            ModificationSpec::AddFeatures { .. } => "add-features",
        }
    }

    /// Number of instances or features touched.
    pub fn size(&self) -> usize {
        match self {
            ModificationSpec::RemoveInstances(v) | ModificationSpec::RemoveFeatures(v) => v.len(),
            ModificationSpec::AddInstances { rows, .. } => rows.len(),
            ModificationSpec::AddFeatures { cols } => cols.len(),
        }
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        match self {
            ModificationSpec::RemoveInstances(idx) => {
                check_removal(idx, ds.n(), "instance")?;
                if idx.len() >= ds.n() {
                    return Err(Error::Domain("all instances removed".into()));
                }
            }
            ModificationSpec::RemoveFeatures(idx) => {
                check_removal(idx, ds.d(), "feature")?;
                if idx.len() >= ds.d() {
                    return Err(Error::Domain("all features removed".into()));
                }
            }
            ModificationSpec::AddInstances { rows, y } => {
                if rows.is_empty() {
                    return Err(Error::Precondition("no instances to add".into()));
                }
                if rows.len() != y.len() {
                    return Err(Error::Dimension(format!(
                        "{} added rows but {} labels",
                        rows.len(),
                        y.len()
                    )));
                }
                for (k, r) in rows.iter().enumerate() {
                    if r.max_index().is_some_and(|m| m >= ds.d()) {
                        return Err(Error::Dimension(format!(
                            "added row {k} exceeds {} features",
                            ds.d()
                        )));
                    }
                    if r.values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Validation(format!("added row {k} is not finite")));
                    }
                }
                if ds.task() == Task::Classification && y.iter().any(|&v| v != 1.0 && v != -1.0)
                {
                    return Err(Error::Validation("added labels must be -1 or +1".into()));
                }
            }
            ModificationSpec::AddFeatures { cols } => {
                if cols.is_empty() {
                    return Err(Error::Precondition("no features to add".into()));
                }
                for (k, c) in cols.iter().enumerate() {
                    if c.max_index().is_some_and(|m| m >= ds.n()) {
                        return Err(Error::Dimension(format!(
                            "added column {k} exceeds {} instances",
                            ds.n()
                        )));
                    }
                    if c.values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Validation(format!("added column {k} is not finite")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Builds the modified dataset. Removals keep the remaining order;
    /// additions are appended at the end.
    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        self.validate(ds)?;
        match self {
            ModificationSpec::RemoveInstances(idx) => {
                Ok(ds.select_instances(&complement(idx, ds.n())))
            }
            ModificationSpec::RemoveFeatures(idx) => {
                Ok(ds.select_features(&complement(idx, ds.d())))
            }
            ModificationSpec::AddInstances { rows, y } => {
                let x = ds.x.append_rows(rows)?;
                let mut yy = ds.y.clone();
                yy.extend_from_slice(y);
                Dataset::new(x, yy, ds.task)
            }
            ModificationSpec::AddFeatures { cols } => {
                let x = ds.x.append_cols(cols)?;
                Dataset::new(x, ds.y.clone(), ds.task)
            }
        }
    }
}

fn check_removal(idx: &[usize], len: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::Precondition(format!("no {what}s to remove")));
    }
    let mut seen = vec![false; len];
    for &i in idx {
        if i >= len {
            return Err(Error::Precondition(format!(
                "{what} index {i} out of range (size {len})"
            )));
        }
        if seen[i] {
            return Err(Error::Precondition(format!("{what} index {i} listed twice")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Sorted indices in `0..len` that are not in `removed`.
pub fn complement(removed: &[usize], len: usize) -> Vec<usize> {
    let mut mask = vec![true; len];
    for &i in removed {
        if i < len {
            mask[i] = false;
        }
    }
    (0..len).filter(|&i| mask[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_dense(
            &[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 0.0], vec![4.0, 0.0, 0.0]],
            vec![1.0, -1.0, 1.0],
            Task::Classification,
        )
        .unwrap()
    }

    #[test]
    fn cached_norms_match() {
        let ds = small();
        assert!((ds.instance_norm(0) - 5f64.sqrt()).abs() < 1e-15);
        assert!((ds.feature_norm(0) - 17f64.sqrt()).abs() < 1e-15);
        let r = ModificationSpec::RemoveInstances(vec![2]).apply(&ds).unwrap();
        assert!((r.feature_norm(0) - 1.0).abs() < 1e-15);
        let f = ModificationSpec::RemoveFeatures(vec![1]).apply(&ds).unwrap();
        assert_eq!(f.d(), 2);
        assert!((f.instance_norm(1)).abs() < 1e-15);
    }

    #[test]
    fn classification_labels_checked() {
        let err = Dataset::from_dense(&[vec![1.0]], vec![0.5], Task::Classification);
        assert!(matches!(err, Err(Error::Validation(_))));
        assert!(Dataset::from_dense(&[vec![1.0]], vec![0.5], Task::Regression).is_ok());
    }

    #[test]
    fn modification_validation() {
        let ds = small();
        assert!(matches!(
            ModificationSpec::RemoveInstances(vec![1, 1]).validate(&ds),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            ModificationSpec::RemoveInstances(vec![0, 1, 2]).validate(&ds),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ModificationSpec::RemoveFeatures(vec![3]).validate(&ds),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            ModificationSpec::AddInstances {
                rows: vec![],
                y: vec![]
            }
            .validate(&ds),
            Err(Error::Precondition(_))
        ));
        let wide = SparseVec::from_dense(&[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            ModificationSpec::AddInstances {
                rows: vec![wide],
                y: vec![1.0]
            }
            .validate(&ds),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn additions_append() {
        let ds = small();
        let added = ModificationSpec::AddInstances {
            rows: vec![SparseVec::from_dense(&[0.0, 1.0, 1.0])],
            y: vec![-1.0],
        }
        .apply(&ds)
        .unwrap();
        assert_eq!(added.n(), 4);
        assert_eq!(added.y()[3], -1.0);
        let with_b = ds.with_intercept_column().unwrap();
        assert_eq!(with_b.d(), 4);
        assert_eq!(with_b.col(3).nnz(), 3);
    }

    #[test]
    fn hash_is_content_based() {
        let a = small();
        let b = small();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = ModificationSpec::RemoveInstances(vec![0]).apply(&a).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }
}
