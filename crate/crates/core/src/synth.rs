//! Seeded synthetic classification data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, SparseMatrix, SparseVec, Task};
use crate::error::{Error, Result};

/// Gaussian features shifted by `±separation` along a random unit direction
/// according to the label, with each entry zeroed with probability
/// `sparsity`. Identical arguments give identical datasets.
pub fn synth_dataset(seed: u64, n: usize, d: usize, sparsity: f64, separation: f64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("synthetic data needs n >= 1 and d >= 1".into()));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::Config(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::Config(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    } else {
        u[0] = 1.0;
    }
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut pairs = Vec::new();
        for (j, &uj) in u.iter().enumerate() {
            if rng.random::<f64>() < sparsity {
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            let v = z + label * separation * uj;
            if v != 0.0 {
                pairs.push((j, v));
            }
        }
        rows.push(SparseVec::from_pairs(pairs)?);
        y.push(label);
    }
    Dataset::new(SparseMatrix::from_rows(&rows, d)?, y, Task::Classification)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_dataset(7, 30, 5, 0.2, 1.0).unwrap();
        let b = synth_dataset(7, 30, 5, 0.2, 1.0).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = synth_dataset(8, 30, 5, 0.2, 1.0).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn sparsity_controls_nnz() {
        let ds = synth_dataset(1, 100, 50, 0.9, 1.0).unwrap();
        let expected = 0.1 * 100.0 * 50.0;
        assert!((ds.x().nnz() as f64 - expected).abs() <= 0.1 * expected);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(synth_dataset(0, 0, 3, 0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(synth_dataset(0, 3, 3, 1.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(synth_dataset(0, 3, 3, 0.0, f64::INFINITY), Err(Error::Config(_))));
    }
}
