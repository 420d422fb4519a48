//! Sparse matrix with both a row-major and a column-major index.
//!
//! Instance-level gap updates walk rows, feature-level updates and the
//! dual-side bounds walk columns, so both structures are built once at
//! construction time and never mutated afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Borrowed sparse vector: strictly increasing indices with parallel values.
#[derive(Debug, Clone, Copy)]
pub struct SparseVecView<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> SparseVecView<'a> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * dense[j]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_owned(&self) -> SparseVec {
        SparseVec {
            indices: self.indices.to_vec(),
            values: self.values.to_vec(),
        }
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (j, v) in self.iter() {
            out[j] = v;
        }
        out
    }
}

/// Owned sparse vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    /// Builds from (index, value) pairs; indices need not be sorted, zero
    /// values are dropped, duplicate indices are rejected.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut out = SparseVec::default();
        for (j, v) in pairs {
            if out.indices.last() == Some(&j) {
                return Err(Error::Validation(format!("duplicate index {j}")));
            }
            if v != 0.0 {
                out.indices.push(j);
                out.values.push(v);
            }
        }
        Ok(out)
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut out = SparseVec::default();
        for (j, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                out.indices.push(j);
                out.values.push(v);
            }
        }
        out
    }

    pub fn view(&self) -> SparseVecView<'_> {
        SparseVecView {
            indices: &self.indices,
            values: &self.values,
        }
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}

/// Compressed sparse rows plus compressed sparse columns of the same matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_vals: Vec<f64>,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from sparse rows. Every row index must be `< n_cols`.
    pub fn from_rows(rows: &[SparseVec], n_cols: usize) -> Result<Self> {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(|r| r.indices.len()).sum();
        let mut row_cols = Vec::with_capacity(nnz);
        let mut row_vals = Vec::with_capacity(nnz);
        for (i, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for (&j, &v) in row.indices.iter().zip(&row.values) {
                if j >= n_cols {
                    return Err(Error::Dimension(format!(
                        "row {i} has column index {j} but the matrix has {n_cols} columns"
                    )));
                }
                if prev.is_some_and(|p| p >= j) {
                    return Err(Error::Validation(format!(
                        "row {i} indices are not strictly increasing"
                    )));
                }
                prev = Some(j);
                if v != 0.0 {
                    row_cols.push(j);
                    row_vals.push(v);
                }
            }
            row_ptr.push(row_cols.len());
        }
        Ok(Self::from_csr_parts(n_rows, n_cols, row_ptr, row_cols, row_vals))
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension("ragged dense rows".into()));
        }
        let sparse: Vec<SparseVec> = rows.iter().map(|r| SparseVec::from_dense(r)).collect();
        Self::from_rows(&sparse, n_cols)
    }

    /// Builds from sparse columns of height `n_rows`.
    pub fn from_cols(cols: &[SparseVec], n_rows: usize) -> Result<Self> {
        let transposed = Self::from_rows(cols, n_rows)?;
        Ok(transposed.transpose())
    }

    fn from_csr_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        row_cols: Vec<usize>,
        row_vals: Vec<f64>,
    ) -> Self {
        let mut counts = vec![0usize; n_cols + 1];
        for &j in &row_cols {
            counts[j + 1] += 1;
        }
        for j in 0..n_cols {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut col_rows = vec![0usize; row_cols.len()];
        let mut col_vals = vec![0.0; row_cols.len()];
        for i in 0..n_rows {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = row_cols[k];
                let dst = next[j];
                col_rows[dst] = i;
                col_vals[dst] = row_vals[k];
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            row_cols,
            row_vals,
            col_ptr,
            col_rows,
            col_vals,
        }
    }

    pub fn transpose(&self) -> Self {
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: self.col_ptr.clone(),
            row_cols: self.col_rows.clone(),
            row_vals: self.col_vals.clone(),
            col_ptr: self.row_ptr.clone(),
            col_rows: self.row_cols.clone(),
            col_vals: self.row_vals.clone(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    pub fn row(&self, i: usize) -> SparseVecView<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        SparseVecView {
            indices: &self.row_cols[a..b],
            values: &self.row_vals[a..b],
        }
    }

    pub fn col(&self, j: usize) -> SparseVecView<'_> {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        SparseVecView {
            indices: &self.col_rows[a..b],
            values: &self.col_vals[a..b],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).get(j)
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseVecView<'_>> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    /// `X w`
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.n_cols);
        (0..self.n_rows).map(|i| self.row(i).dot(w)).collect()
    }

    /// `Xᵀ a`
    pub fn tmul_vec(&self, a: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), self.n_rows);
        (0..self.n_cols).map(|j| self.col(j).dot(a)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| self.row(i).to_dense(self.n_cols))
            .collect()
    }

    pub fn owned_rows(&self) -> Vec<SparseVec> {
        self.rows().map(|r| r.to_owned()).collect()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        for &i in keep {
            let r = self.row(i);
            row_cols.extend_from_slice(r.indices);
            row_vals.extend_from_slice(r.values);
            row_ptr.push(row_cols.len());
        }
        Self::from_csr_parts(keep.len(), self.n_cols, row_ptr, row_cols, row_vals)
    }

    /// Keeps the listed columns, in the given order (columns are renumbered).
    pub fn select_cols(&self, keep: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; self.n_cols];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let monotone = keep.windows(2).all(|w| w[0] < w[1]);
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.n_rows {
            scratch.clear();
            for (j, v) in self.row(i).iter() {
                let nj = remap[j];
                if nj != usize::MAX {
                    scratch.push((nj, v));
                }
            }
            if !monotone {
                scratch.sort_by_key(|p| p.0);
            }
            for &(j, v) in &scratch {
                row_cols.push(j);
                row_vals.push(v);
            }
            row_ptr.push(row_cols.len());
        }
        Self::from_csr_parts(self.n_rows, keep.len(), row_ptr, row_cols, row_vals)
    }

    pub fn append_rows(&self, rows: &[SparseVec]) -> Result<Self> {
        let mut all = self.owned_rows();
        all.extend_from_slice(rows);
        Self::from_rows(&all, self.n_cols)
    }

    pub fn append_cols(&self, cols: &[SparseVec]) -> Result<Self> {
        let t = self.transpose();
        let grown = t.append_rows(cols)?;
        // from_rows checked the column heights against n_rows of the transpose
        Ok(grown.transpose())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, density: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if rng.random::<f64>() < density {
                            rng.random_range(-2.0..2.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn row_and_column_views_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let dense = random_matrix(&mut rng, 13, 9, 0.3);
            let m = SparseMatrix::from_dense(&dense).unwrap();
            for _ in 0..40 {
                let i = rng.random_range(0..13);
                let j = rng.random_range(0..9);
                assert_eq!(m.row(i).get(j), dense[i][j]);
                assert_eq!(m.col(j).get(i), dense[i][j]);
            }
            assert_eq!(m.to_dense(), dense);
        }
    }

    #[test]
    fn products_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = random_matrix(&mut rng, 8, 5, 0.5);
        let m = SparseMatrix::from_dense(&dense).unwrap();
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let xw = m.mul_vec(&w);
        let xta = m.tmul_vec(&a);
        for i in 0..8 {
            let want: f64 = (0..5).map(|j| dense[i][j] * w[j]).sum();
            assert!((xw[i] - want).abs() < 1e-14);
        }
        for j in 0..5 {
            let want: f64 = (0..8).map(|i| dense[i][j] * a[i]).sum();
            assert!((xta[j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn select_and_append() {
        let dense = vec![
            vec![1.0, 0.0, 2.0],
            vec![0.0, 3.0, 0.0],
            vec![4.0, 0.0, 5.0],
        ];
        let m = SparseMatrix::from_dense(&dense).unwrap();
        let r = m.select_rows(&[2, 0]);
        assert_eq!(r.to_dense(), vec![vec![4.0, 0.0, 5.0], vec![1.0, 0.0, 2.0]]);
        let c = m.select_cols(&[0, 2]);
        assert_eq!(c.col(1).to_dense(3), vec![2.0, 0.0, 5.0]);
        let c2 = m.append_cols(&[SparseVec::from_dense(&[0.0, 7.0, 0.0])]).unwrap();
        assert_eq!(c2.n_cols(), 4);
        assert_eq!(c2.get(1, 3), 7.0);
        let r2 = m.append_rows(&[SparseVec::from_dense(&[0.0, 0.0, 9.0])]).unwrap();
        assert_eq!(r2.n_rows(), 4);
        assert_eq!(r2.col(2).to_dense(4), vec![2.0, 0.0, 5.0, 9.0]);
    }

    #[test]
    fn rejects_out_of_range_and_unsorted() {
        let bad = SparseVec {
            indices: vec![0, 3],
            values: vec![1.0, 1.0],
        };
        assert!(SparseMatrix::from_rows(&[bad], 3).is_err());
        let unsorted = SparseVec {
            indices: vec![2, 1],
            values: vec![1.0, 1.0],
        };
        assert!(SparseMatrix::from_rows(&[unsorted], 3).is_err());
        assert!(SparseVec::from_pairs(vec![(1, 1.0), (1, 2.0)]).is_err());
    }
}
