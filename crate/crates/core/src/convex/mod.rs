//! Univariate convex functions used by the ERM problem: losses, per-coordinate
//! penalties, their conjugates and subgradient intervals.

mod interval;
mod loss;
mod reg;

pub use interval::{ext_real, Interval};
pub use loss::Loss;
pub use reg::{Penalty, RegKind, Regularizer};

/// Tolerance used when testing membership of the (closed) domain of an
/// indicator conjugate. Relative to the bound for L1, absolute for the
/// unregularized coordinate.
pub const FEASIBILITY_EPS: f64 = 1e-10;

/// Common interface of a closed proper convex function on the real line.
pub trait ConvexFn {
    fn value(&self, t: f64) -> f64;
    fn subgrad(&self, t: f64) -> Interval;
    /// Convex conjugate; `+inf` outside its domain.
    fn conj(&self, s: f64) -> f64;
    /// Subgradient interval of the conjugate. Outside the domain the
    /// interval degenerates to `[-inf, -inf]` or `[+inf, +inf]`.
    fn conj_subgrad(&self, s: f64) -> Interval;
}

fn term_min(lo: f64, hi: f64, c: f64) -> f64 {
    if c > 0.0 {
        c * lo
    } else if c < 0.0 {
        c * hi
    } else {
        0.0
    }
}

fn term_max(lo: f64, hi: f64, c: f64) -> f64 {
    if c > 0.0 {
        c * hi
    } else if c < 0.0 {
        c * lo
    } else {
        0.0
    }
}

/// `min { cᵀv : a ≤ v ≤ b }`, with `0·∞ = 0`.
///
/// Opposite infinities (which only arise from an empty box) resolve to
/// `-inf`, the conservative side.
pub fn minlin(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    assert!(a.len() == b.len() && b.len() == c.len(), "minlin length mismatch");
    sanitize_low(a.iter().zip(b).zip(c).map(|((&lo, &hi), &c)| term_min(lo, hi, c)).sum())
}

/// `max { cᵀv : a ≤ v ≤ b }`, with `0·∞ = 0`.
pub fn maxlin(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    assert!(a.len() == b.len() && b.len() == c.len(), "maxlin length mismatch");
    sanitize_high(a.iter().zip(b).zip(c).map(|((&lo, &hi), &c)| term_max(lo, hi, c)).sum())
}

/// `minlin` over a box given as intervals and a sparse direction.
pub fn minlin_sparse(boxes: &[Interval], c: impl IntoIterator<Item = (usize, f64)>) -> f64 {
    sanitize_low(
        c.into_iter()
            .map(|(j, cj)| term_min(boxes[j].lo, boxes[j].hi, cj))
            .sum(),
    )
}

/// `maxlin` over a box given as intervals and a sparse direction.
pub fn maxlin_sparse(boxes: &[Interval], c: impl IntoIterator<Item = (usize, f64)>) -> f64 {
    sanitize_high(
        c.into_iter()
            .map(|(j, cj)| term_max(boxes[j].lo, boxes[j].hi, cj))
            .sum(),
    )
}

fn sanitize_low(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn sanitize_high(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minlin_corner_example() {
        let a = [0.0, 0.0];
        let b = [1.0, 1.0];
        let c = [-2.0, 3.0];
        assert_eq!(minlin(&a, &b, &c), -2.0);
        assert_eq!(maxlin(&a, &b, &c), 3.0);
    }

    #[test]
    fn zero_direction_and_infinite_box() {
        let a = [f64::NEG_INFINITY, 1.0];
        let b = [f64::INFINITY, 2.0];
        assert_eq!(minlin(&a, &b, &[0.0, 0.0]), 0.0);
        assert_eq!(minlin(&a, &b, &[0.0, 1.0]), 1.0);
        assert_eq!(maxlin(&a, &b, &[0.0, -1.0]), -1.0);
        assert_eq!(maxlin(&a, &b, &[1.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn degenerate_box() {
        let v = [0.5, -2.0, 3.0];
        let c = [1.0, 2.0, -1.0];
        let dot: f64 = v.iter().zip(&c).map(|(a, b)| a * b).sum();
        assert_eq!(minlin(&v, &v, &c), dot);
        assert_eq!(maxlin(&v, &v, &c), dot);
    }

    proptest! {
        #[test]
        fn box_points_are_bracketed(
            data in proptest::collection::vec((-5.0f64..5.0, 0.0f64..3.0, -4.0f64..4.0, 0.0f64..1.0), 1..12)
        ) {
            let a: Vec<f64> = data.iter().map(|t| t.0).collect();
            let b: Vec<f64> = data.iter().map(|t| t.0 + t.1).collect();
            let c: Vec<f64> = data.iter().map(|t| t.2).collect();
            let v: Vec<f64> = data.iter().map(|t| t.0 + t.3 * t.1).collect();
            let dot: f64 = v.iter().zip(&c).map(|(x, y)| x * y).sum();
            prop_assert!(minlin(&a, &b, &c) <= dot + 1e-12);
            prop_assert!(dot <= maxlin(&a, &b, &c) + 1e-12);
        }
    }
}
