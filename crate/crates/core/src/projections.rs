//! Exact projections used by every solver: probability simplex (column-wise,
//! optionally scaled), box intervals, and the nonnegative orthant.
//!
//! The simplex projection is the sort-based threshold scheme: sort the column
//! in decreasing order, find the largest k with
//! `q_(k) - (sum_{j<=k} q_(j) - scale) / k > 0`, and clip at that threshold.
//! A pre-sorted entry point is exposed so the Bregman fixed point can sort each
//! column once and re-threshold many times.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Per-row interval bounds `[a_i, b_i]`. Infinite entries mean "no clamp on
/// that side", which is how the solvers degrade to plain nonnegativity.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "bounds have {} lower and {} upper entries",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || a > b {
                return Err(Error::InvalidBounds(i));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Constant bounds `[a, b]` replicated over `m` rows.
    pub fn constant(a: f64, b: f64, m: usize) -> Result<Self> {
        Self::new(vec![a; m], vec![b; m])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Bounds translated by `-mu`, the interval the centered problem lives in.
    pub fn shifted(&self, mu: &[f64]) -> Bounds {
        let lower = self.lower.iter().zip(mu).map(|(&a, &m)| a - m).collect();
        let upper = self.upper.iter().zip(mu).map(|(&b, &m)| b - m).collect();
        Bounds { lower, upper }
    }
}

/// Euclidean projection of each column of `a` onto the simplex
/// `{ y >= 0, sum y = scale }`.
pub fn project_simplex_columns(a: &DenseMatrix, scale: f64) -> DenseMatrix {
    assert!(scale > 0.0, "simplex scale must be positive");
    let (r, n) = a.shape();
    let mut out = DenseMatrix::zeros(r, n);
    let mut col = vec![0.0; r];
    let mut sorted = vec![0.0; r];
    for j in 0..n {
        a.col_into(j, &mut col);
        sorted.copy_from_slice(&col);
        sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let nu = threshold_from_sorted(&sorted, scale);
        for i in 0..r {
            col[i] = (col[i] - nu).max(0.0);
        }
        snap_column_sum(&mut col, scale);
        for i in 0..r {
            out.set(i, j, col[i]);
        }
    }
    out
}

/// Projection of a single vector onto the scaled simplex.
pub fn project_simplex(q: &[f64], scale: f64) -> Vec<f64> {
    let nu = simplex_threshold(q, scale);
    let mut y: Vec<f64> = q.iter().map(|&v| (v - nu).max(0.0)).collect();
    snap_column_sum(&mut y, scale);
    y
}

/// Nudges the largest entry so the sorted-order floating-point sum equals
/// `scale` bit for bit. The adjustment is at rounding level; it makes the
/// projection exactly idempotent, since re-projecting then solves for a
/// threshold of exactly zero.
fn snap_column_sum(y: &mut [f64], scale: f64) {
    for _ in 0..8 {
        let mut sorted: Vec<f64> = y.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sum: f64 = sorted.iter().sum();
        let diff = scale - sum;
        if diff == 0.0 {
            return;
        }
        let (max_idx, _) = y
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .expect("nonempty column");
        y[max_idx] += diff;
    }
}

/// The water-filling threshold `nu` with `sum_i max(q_i - nu, 0) = scale`.
pub fn simplex_threshold(q: &[f64], scale: f64) -> f64 {
    assert!(scale > 0.0, "simplex scale must be positive");
    let mut sorted = q.to_vec();
    sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
    threshold_from_sorted(&sorted, scale)
}

/// Same as [`simplex_threshold`] but for a column already sorted in
/// decreasing order.
pub fn threshold_from_sorted(sorted_desc: &[f64], scale: f64) -> f64 {
    debug_assert!(scale > 0.0);
    let mut cumsum = 0.0;
    let mut nu = sorted_desc[0] - scale; // k = 1 fallback
    for (k, &v) in sorted_desc.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - scale) / (k + 1) as f64;
        if v - candidate > 0.0 {
            nu = candidate;
        } else {
            break;
        }
    }
    nu
}

/// Column-wise clamp onto `[a, b]`; infinite bounds leave that side open.
pub fn project_box_columns(a: &DenseMatrix, bounds: &Bounds) -> Result<DenseMatrix> {
    if bounds.len() != a.rows() {
        return Err(Error::DimensionMismatch(format!(
            "bounds have {} rows, matrix has {}",
            bounds.len(),
            a.rows()
        )));
    }
    let mut out = a.clone();
    for i in 0..a.rows() {
        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
        for v in out.row_mut(i) {
            if *v < lo {
                *v = lo;
            } else if *v > hi {
                *v = hi;
            }
        }
    }
    Ok(out)
}

/// Entrywise `max(a, 0)`.
pub fn project_nonneg(a: &DenseMatrix) -> DenseMatrix {
    a.map(|v| v.max(0.0))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn projected_columns_are_feasible(
            vals in proptest::collection::vec(-10.0f64..10.0, 3..24),
            scale in 0.05f64..10.0,
        ) {
            let r = 3;
            let n = vals.len() / r;
            prop_assume!(n >= 1);
            let a = DenseMatrix::from_vec(r, n, vals[..r * n].to_vec()).unwrap();
            let p = project_simplex_columns(&a, scale);
            for j in 0..n {
                let mut sum = 0.0;
                for i in 0..r {
                    prop_assert!(p.get(i, j) >= 0.0);
                    sum += p.get(i, j);
                }
                prop_assert!((sum - scale).abs() <= 1e-11 * scale.max(1.0));
            }
        }

        #[test]
        fn threshold_reproduces_scale(
            vals in proptest::collection::vec(-10.0f64..10.0, 2..12),
            scale in 0.05f64..10.0,
        ) {
            let nu = simplex_threshold(&vals, scale);
            let total: f64 = vals.iter().map(|&v| (v - nu).max(0.0)).sum();
            prop_assert!((total - scale).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
