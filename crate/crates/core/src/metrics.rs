//! Quality measures: relative reconstruction error, RMSE on hidden entries,
//! mean-removed spectral angle (MRSA), and the angle between column spaces.

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::matrix::{dot, norm2, DenseMatrix};
use crate::solver::ObservationMask;

/// Summary of the quality measures for one estimated factorization.
#[derive(Debug, Clone, Default)]
pub struct EvaluationReport {
    pub relative_error: f64,
    pub rmse_unobserved: Option<f64>,
    pub mrsa_mean: Option<f64>,
    pub subspace_angle_rad: Option<f64>,
}

impl EvaluationReport {
    /// Evaluates an estimate against data, and optionally against known
    /// ground truth: hidden-entry RMSE when a mask hides entries, matched
    /// MRSA and subspace angle when the generating factor is available.
    pub fn evaluate(
        x: &DenseMatrix,
        w: &DenseMatrix,
        h: &DenseMatrix,
        mask: Option<&ObservationMask>,
        w_true: Option<&DenseMatrix>,
    ) -> Result<Self> {
        let rel = relative_error(x, w, h, mask)?;
        let rmse = match mask {
            Some(m) if m.observed_count() < m.weights.data().len() => {
                Some(rmse_unobserved(x, w, h, m)?)
            }
            _ => None,
        };
        let (mrsa_mean, angle) = match w_true {
            Some(wt) => (
                Some(mrsa_matched(wt, w)?),
                Some(subspace_angle(wt, w)?),
            ),
            None => (None, None),
        };
        Ok(Self {
            relative_error: rel,
            rmse_unobserved: rmse,
            mrsa_mean,
            subspace_angle_rad: angle,
        })
    }
}

/// `||M o (X - WH)||_F / ||M o X||_F`; the mask defaults to all ones.
pub fn relative_error(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: Option<&ObservationMask>,
) -> Result<f64> {
    let wh = w.matmul(h);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let m = mask.map_or(1.0, |m| m.weights.get(i, j));
            num += (m * (x.get(i, j) - wh.get(i, j))).powi(2);
            den += (m * x.get(i, j)).powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroDataNorm);
    }
    Ok((num / den).sqrt())
}

/// RMSE of `WH` against `x_full` over the complement of a binary mask.
pub fn rmse_unobserved(
    x_full: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<f64> {
    mask.require_binary()?;
    let wh = w.matmul(h);
    let mut count = 0usize;
    let mut sum = 0.0;
    for i in 0..x_full.rows() {
        for j in 0..x_full.cols() {
            if mask.weights.get(i, j) == 0.0 {
                count += 1;
                sum += (x_full.get(i, j) - wh.get(i, j)).powi(2);
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyComplement);
    }
    Ok((sum / count as f64).sqrt())
}

/// Mean-removed spectral angle between two vectors, scaled to [0, 100].
pub fn mrsa(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "mrsa vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let centered = |v: &[f64]| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|&x| x - mean).collect()
    };
    let ac = centered(a);
    let bc = centered(b);
    let (na, nb) = (norm2(&ac), norm2(&bc));
    if na < 1e-14 || nb < 1e-14 {
        return Err(Error::DegenerateVector);
    }
    let cos = (dot(&ac, &bc) / (na * nb)).clamp(-1.0, 1.0);
    Ok(100.0 / std::f64::consts::PI * cos.acos())
}

/// Mean column-wise MRSA under the best column permutation.
///
/// Exhaustive over all permutations for r <= 8, greedy assignment with 2-swap
/// refinement beyond that.
pub fn mrsa_matched(w_true: &DenseMatrix, w_est: &DenseMatrix) -> Result<f64> {
    if w_true.shape() != w_est.shape() {
        return Err(Error::DimensionMismatch(format!(
            "factors have shapes {:?} and {:?}",
            w_true.shape(),
            w_est.shape()
        )));
    }
    let r = w_true.cols();
    let mut cost = vec![vec![0.0; r]; r];
    for i in 0..r {
        let ci = w_true.col(i);
        for j in 0..r {
            cost[i][j] = mrsa(&ci, &w_est.col(j))?;
        }
    }
    let perm = if r <= 8 {
        best_permutation_exhaustive(&cost)
    } else {
        best_permutation_greedy(&cost)
    };
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(total / r as f64)
}

fn best_permutation_exhaustive(cost: &[Vec<f64>]) -> Vec<usize> {
    let r = cost.len();
    let mut perm: Vec<usize> = (0..r).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    permute_recurse(&mut perm, 0, cost, &mut best, &mut best_cost);
    best
}

fn permute_recurse(
    perm: &mut Vec<usize>,
    k: usize,
    cost: &[Vec<f64>],
    best: &mut Vec<usize>,
    best_cost: &mut f64,
) {
    let r = perm.len();
    if k == r {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < *best_cost {
            *best_cost = total;
            best.clone_from(perm);
        }
        return;
    }
    for i in k..r {
        perm.swap(k, i);
        permute_recurse(perm, k + 1, cost, best, best_cost);
        perm.swap(k, i);
    }
}

fn best_permutation_greedy(cost: &[Vec<f64>]) -> Vec<usize> {
    let r = cost.len();
    let mut perm = vec![usize::MAX; r];
    let mut taken = vec![false; r];
    // greedy row-by-row assignment
    for i in 0..r {
        let mut best_j = 0;
        let mut best_c = f64::INFINITY;
        for j in 0..r {
            if !taken[j] && cost[i][j] < best_c {
                best_c = cost[i][j];
                best_j = j;
            }
        }
        perm[i] = best_j;
        taken[best_j] = true;
    }
    // 2-swap refinement until no improving exchange remains
    let mut improved = true;
    while improved {
        improved = false;
        for a in 0..r {
            for b in (a + 1)..r {
                let current = cost[a][perm[a]] + cost[b][perm[b]];
                let swapped = cost[a][perm[b]] + cost[b][perm[a]];
                if swapped + 1e-15 < current {
                    perm.swap(a, b);
                    improved = true;
                }
            }
        }
    }
    perm
}

/// Angle in radians between the column spaces of `w` and `w_est`:
/// `arcsin(min(1, || U_est - U U^T U_est ||))` with orthonormal bases from
/// modified Gram-Schmidt.
pub fn subspace_angle(w: &DenseMatrix, w_est: &DenseMatrix) -> Result<f64> {
    let u = orthonormal_basis(w)?;
    let u_est = orthonormal_basis(w_est)?;
    // D = U_est - U (U^T U_est)
    let coeff = u.matmul_tn(&u_est);
    let mut d = u_est.clone();
    d.axpy(-1.0, &u.matmul(&coeff));
    Ok(spectral_norm(&d).min(1.0).asin())
}

/// Orthonormal basis of the column space via modified Gram-Schmidt; fails if
/// the columns are numerically dependent.
fn orthonormal_basis(w: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, r) = w.shape();
    let scale = w.fro_norm().max(f64::MIN_POSITIVE);
    let mut cols: Vec<Vec<f64>> = (0..r).map(|j| w.col(j)).collect();
    for j in 0..r {
        for k in 0..j {
            let proj = dot(&cols[j], &cols[k]);
            for i in 0..m {
                cols[j][i] -= proj * cols[k][i];
            }
        }
        let nrm = norm2(&cols[j]);
        if nrm <= 1e-12 * scale {
            return Err(Error::RankDeficient);
        }
        for v in cols[j].iter_mut() {
            *v /= nrm;
        }
    }
    let mut u = DenseMatrix::zeros(m, r);
    for (j, c) in cols.iter().enumerate() {
        u.set_col(j, c);
    }
    Ok(u)
}
