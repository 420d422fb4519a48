use serde::{Deserialize, Serialize};

use super::{Dataset, SparseMatrix, SparseVec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Mean 0 and variance 1 per column (divisor n). Densifies the matrix.
    Dense,
    /// Scale each column so that its L2 norm is sqrt(n). Keeps zeros.
    Sparse,
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Normalization::Dense),
            "sparse" => Ok(Normalization::Sparse),
            "none" => Ok(Normalization::None),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

/// Per-column affine map fitted on one dataset, `x' = (x - shift) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub strategy: Normalization,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(ds: &Dataset, strategy: Normalization) -> Result<Scaler> {
        let n = ds.n();
        let d = ds.d();
        if n == 0 {
            return Err(Error::Validation("cannot normalize an empty dataset".into()));
        }
        let nf = n as f64;
        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        match strategy {
            Normalization::None => {}
            Normalization::Sparse => {
                for j in 0..d {
                    let norm = ds.feature_norm(j);
                    if norm == 0.0 {
                        return Err(Error::Normalization {
                            column: j,
                            reason: "column is all zero".into(),
                        });
                    }
                    scale[j] = nf.sqrt() / norm;
                }
            }
            Normalization::Dense => {
                for j in 0..d {
                    let col = ds.col(j);
                    let mean = col.values.iter().sum::<f64>() / nf;
                    let zeros = (n - col.nnz()) as f64;
                    let ss: f64 = col.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        + zeros * mean * mean;
                    let var = ss / nf;
                    let peak = col.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if var <= (1e-12 * peak).powi(2) || var == 0.0 {
                        return Err(Error::Normalization {
                            column: j,
                            reason: "column has zero variance".into(),
                        });
                    }
                    shift[j] = mean;
                    scale[j] = 1.0 / var.sqrt();
                }
            }
        }
        Ok(Scaler {
            strategy,
            shift,
            scale,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.d() != self.scale.len() {
            return Err(Error::Dimension(format!(
                "scaler fitted on {} features, dataset has {}",
                self.scale.len(),
                ds.d()
            )));
        }
        let x = match self.strategy {
            Normalization::None => return Ok(ds.clone()),
            Normalization::Sparse => {
                let rows: Vec<SparseVec> = ds
                    .x()
                    .rows()
                    .map(|r| SparseVec {
                        indices: r.indices.to_vec(),
                        values: r.iter().map(|(j, v)| v * self.scale[j]).collect(),
                    })
                    .collect();
                SparseMatrix::from_rows(&rows, ds.d())?
            }
            Normalization::Dense => {
                let dense: Vec<Vec<f64>> = ds
                    .x()
                    .to_dense()
                    .into_iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .map(|(j, v)| (v - self.shift[j]) * self.scale[j])
                            .collect()
                    })
                    .collect();
                let rows: Vec<SparseVec> = dense.iter().map(|r| SparseVec::from_dense(r)).collect();
                SparseMatrix::from_rows(&rows, ds.d())?
            }
        };
        Dataset::new(x, ds.y().to_vec(), ds.task())
    }
}

pub fn normalize(ds: &Dataset, strategy: Normalization) -> Result<Dataset> {
    Scaler::fit(ds, strategy)?.apply(ds)
}

#[derive(Debug, Clone)]
pub struct ConstantDrop {
    pub dataset: Dataset,
    /// Original indices of the columns that were removed.
    pub dropped: Vec<usize>,
    /// Original indices of the columns that were kept, in order.
    pub kept: Vec<usize>,
}

/// Removes columns that take a single value across all instances.
pub fn drop_constant_features(ds: &Dataset) -> ConstantDrop {
    let n = ds.n();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..ds.d() {
        let col = ds.col(j);
        let constant = col.nnz() == 0
            || (col.nnz() == n && col.values.iter().all(|&v| v == col.values[0]));
        if constant {
            dropped.push(j);
        } else {
            kept.push(j);
        }
    }
    let dataset = if dropped.is_empty() {
        ds.clone()
    } else {
        ds.select_features(&kept)
    };
    ConstantDrop {
        dataset,
        dropped,
        kept,
    }
}
