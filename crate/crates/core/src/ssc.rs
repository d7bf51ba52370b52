//! Necessary-condition diagnostics for the sufficiently scattered condition
//! on a nonnegative factor `H`.
//!
//! Certifying the condition exactly is NP-hard, so this module checks the two
//! necessary consequences that can be tested cheaply:
//!
//! 1. every row of `H` carries at least `r - 1` (near-)zeros, and
//! 2. each corner direction `e - e_i` lies in the conical hull of the columns
//!    of `H` (tested as an NNLS feasibility problem).
//!
//! Passing both says the factor *may* be sufficiently scattered; failing
//! either proves it is not.

use crate::error::{Error, Result};
use crate::linalg::SpdFactorization;
use crate::matrix::DenseMatrix;
use crate::projections::Bounds;
use crate::separable::nnls_solve_vector;

/// Outcome of the necessary-condition tests.
#[derive(Debug, Clone)]
pub struct SscReport {
    /// Number of entries per row at or below the zero tolerance.
    pub row_zero_counts: Vec<usize>,
    /// True iff every row holds at least `r - 1` zeros.
    pub row_sparsity_ok: bool,
    /// `corner_membership[i]` is true iff `e - e_i` lies in `cone(H)`.
    pub corner_membership: Vec<bool>,
    /// `row_sparsity_ok && all(corner_membership)`.
    pub necessary_ok: bool,
}

/// Runs both necessary tests on `H` (r x n) with a relative tolerance.
pub fn check_ssc1_necessary(h: &DenseMatrix, tol: f64) -> Result<SscReport> {
    let (r, _n) = h.shape();
    if r < 2 {
        return Err(Error::InvalidArgument(
            "the scattering tests need rank >= 2".into(),
        ));
    }
    if tol < 0.0 {
        return Err(Error::InvalidArgument(
            "tolerance must be nonnegative".into(),
        ));
    }
    let max_abs = h.max_abs();
    let zero_tol = tol * max_abs;
    if h.min_entry() < -zero_tol {
        return Err(Error::NegativeInput);
    }

    let row_zero_counts: Vec<usize> = (0..r)
        .map(|i| h.row(i).iter().filter(|&&v| v <= zero_tol).count())
        .collect();
    let row_sparsity_ok = row_zero_counts.iter().all(|&c| c >= r - 1);

    let resid_tol = tol * (r as f64).sqrt();
    let mut corner_membership = Vec::with_capacity(r);
    for i in 0..r {
        let target: Vec<f64> = (0..r).map(|k| if k == i { 0.0 } else { 1.0 }).collect();
        let resid = cone_distance(h, &target);
        corner_membership.push(resid <= resid_tol);
    }

    let necessary_ok = row_sparsity_ok && corner_membership.iter().all(|&b| b);
    Ok(SscReport {
        row_zero_counts,
        row_sparsity_ok,
        corner_membership,
        necessary_ok,
    })
}

/// `min_{y >= 0} ||H y - b||_2`, to a precision far below the membership
/// tolerance. The projected-gradient NNLS locates the active set; an
/// unconstrained least-squares polish on that support sharpens the residual,
/// dropping negative coefficients until the support is clean.
fn cone_distance(h: &DenseMatrix, b: &[f64]) -> f64 {
    let sol = nnls_solve_vector(h, b);
    let y = sol.h.col(0);
    let residual = |yv: &[f64]| -> f64 {
        let fitted = h.matvec(yv);
        fitted
            .iter()
            .zip(b)
            .map(|(&f, &t)| (f - t) * (f - t))
            .sum::<f64>()
            .sqrt()
    };
    let mut best = residual(&y);
    let y_max = y.iter().cloned().fold(0.0, f64::max);
    let mut support: Vec<usize> = (0..y.len())
        .filter(|&j| y[j] > 1e-10 * y_max.max(1e-300))
        .collect();
    for _ in 0..support.len().max(1) {
        if support.is_empty() {
            break;
        }
        // restricted least squares on the support via normal equations
        let mut hs = DenseMatrix::zeros(h.rows(), support.len());
        for (c, &j) in support.iter().enumerate() {
            for i in 0..h.rows() {
                hs.set(i, c, h.get(i, j));
            }
        }
        let gram = hs.gram();
        let chol = match SpdFactorization::new(&gram) {
            Ok(c) => c,
            Err(_) => break,
        };
        let mut rhs = hs.matvec_t(b);
        chol.solve_in_place(&mut rhs);
        if let Some((worst, _)) = rhs
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < -1e-10)
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        {
            support.remove(worst);
            continue;
        }
        let mut polished = vec![0.0; y.len()];
        for (c, &j) in support.iter().enumerate() {
            polished[j] = rhs[c].max(0.0);
        }
        best = best.min(residual(&polished));
        break;
    }
    best
}

/// Stacks the bounded factor `[W - a e^T; b e^T - W]^T` into the r x 2m matrix
/// whose scattering governs identifiability of a bounded factorization.
pub fn stacked_bounds_matrix(w: &DenseMatrix, bounds: &Bounds) -> Result<DenseMatrix> {
    let (m, r) = w.shape();
    if bounds.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "bounds have {} rows, W has {m}",
            bounds.len()
        )));
    }
    let mut out = DenseMatrix::zeros(r, 2 * m);
    for i in 0..m {
        for k in 0..r {
            out.set(k, i, w.get(i, k) - bounds.lower[i]);
            out.set(k, m + i, bounds.upper[i] - w.get(i, k));
        }
    }
    Ok(out)
}
