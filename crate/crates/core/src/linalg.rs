//! Numerical kernels shared by the solvers: spectral norm, SPD factorization,
//! log-determinant, and a small symmetric eigendecomposition.
//!
//! Everything here is deterministic and accumulates in f64. The eigensolver is
//! a cyclic Jacobi iteration, which is plenty for the r-by-r matrices (r <= 20
//! or so) these solvers produce.

use crate::error::{Error, Result};
use crate::matrix::{norm2, DenseMatrix};

const POWER_MAX_ITERS: usize = 500;
const POWER_TOL: f64 = 1e-10;

/// Largest singular value of `a`.
///
/// Power iteration on the smaller of `a^T a` and `a a^T`, started from the
/// normalized all-ones vector; restarts once from `e_1` if the Rayleigh
/// quotient stalls away from convergence. A zero matrix returns 0.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.max_abs() == 0.0 {
        return 0.0;
    }
    let gram = if a.cols() <= a.rows() {
        a.gram()
    } else {
        a.gram_t()
    };
    top_eigenvalue_psd(&gram).max(0.0).sqrt()
}

/// Spectral norm inflated by 1e-8, for use as a gradient Lipschitz constant.
/// A slightly loose estimate keeps the 1/L step sizes valid.
pub(crate) fn lipschitz_norm(a: &DenseMatrix) -> f64 {
    spectral_norm(a) * (1.0 + 1e-8)
}

/// Largest eigenvalue of a symmetric PSD matrix via power iteration.
fn top_eigenvalue_psd(g: &DenseMatrix) -> f64 {
    let n = g.rows();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0_f64;
    let mut stall = 0usize;
    let mut restarted = false;
    for _ in 0..POWER_MAX_ITERS {
        let w = g.matvec(&v);
        let nw = norm2(&w);
        if nw == 0.0 {
            // start vector lies in the kernel; restart from a basis vector
            if restarted {
                return 0.0;
            }
            restarted = true;
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
            lambda = 0.0;
            stall = 0;
            continue;
        }
        let lambda_new: f64 = v.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let rel = (lambda_new - lambda).abs() / lambda_new.abs().max(f64::MIN_POSITIVE);
        // residual ||Gv - lambda v|| relative to lambda
        let resid = {
            let mut s = 0.0;
            for i in 0..n {
                let d = w[i] - lambda_new * v[i];
                s += d * d;
            }
            s.sqrt() / lambda_new.abs().max(f64::MIN_POSITIVE)
        };
        for i in 0..n {
            v[i] = w[i] / nw;
        }
        if rel < POWER_TOL && resid < 1e-6 {
            return lambda_new;
        }
        if rel < 1e-12 {
            stall += 1;
            if stall >= 3 && resid > 1e-8 && !restarted {
                restarted = true;
                v.iter_mut().for_each(|x| *x = 0.0);
                v[0] = 1.0;
                lambda = 0.0;
                stall = 0;
                continue;
            }
        } else {
            stall = 0;
        }
        lambda = lambda_new;
    }
    lambda
}

/// Cholesky factorization `A = L L^T` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    dim: usize,
    l: Vec<f64>, // row-major lower triangle, full square storage
}

impl SpdFactorization {
    /// Factorizes `a`; on failure adds `1e-12 * trace / dim` to the diagonal
    /// and retries once before reporting `NotPositiveDefinite`.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch(format!(
                "Cholesky needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        match Self::factor(a, 0.0) {
            Ok(f) => Ok(f),
            Err(_) => {
                let jitter = 1e-12 * a.trace() / a.rows() as f64;
                Self::factor(a, jitter.max(0.0))
            }
        }
    }

    fn factor(a: &DenseMatrix, jitter: f64) -> Result<Self> {
        let n = a.rows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                if i == j {
                    s += jitter;
                }
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { dim: n, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower-triangular factor as a dense matrix.
    pub fn lower(&self) -> DenseMatrix {
        DenseMatrix::from_raw(self.dim, self.dim, self.l.clone())
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// `A^{-1}` as a dense matrix.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            inv.set_col(j, &col);
        }
        // exact symmetry helps downstream consumers
        inv.symmetrize();
        inv
    }

    /// `log det A = 2 sum_i log L_ii`.
    pub fn logdet(&self) -> f64 {
        let n = self.dim;
        (0..n).map(|i| self.l[i * n + i].ln()).sum::<f64>() * 2.0
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(SpdFactorization::new(a)?.inverse())
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn logdet_spd(a: &DenseMatrix) -> Result<f64> {
    Ok(SpdFactorization::new(a)?.logdet())
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as columns. Intended for the small r-by-r matrices of the
/// solvers; fails with `ConvergenceFailure` after 100 sweeps.
pub fn sym_eig(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = m.fro_norm().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j).powi(2);
            }
        }
        if (2.0 * off).sqrt() <= 1e-14 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // rows/columns p and q of m
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        // final check: the last sweep may have finished the job
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j).powi(2);
            }
        }
        if (2.0 * off).sqrt() > 1e-14 * scale {
            return Err(Error::ConvergenceFailure(JACOBI_MAX_SWEEPS));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, new_j, v.get(i, old_j));
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn random_matrix(rows: usize, cols: usize, stream: &mut Stream) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| stream.uniform_in(-1.0, 1.0))
    }

    #[test]
    fn spectral_norm_identity_and_diag() {
        assert!((spectral_norm(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-9);
        let d = DenseMatrix::from_vec(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((spectral_norm(&d) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_nilpotent() {
        // [[0,1],[0,0]] has singular values {1, 0}
        let a = DenseMatrix::from_vec(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((spectral_norm(&a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_zero_matrix() {
        assert_eq!(spectral_norm(&DenseMatrix::zeros(3, 4)), 0.0);
    }

    #[test]
    fn spectral_norm_kernel_start_vector() {
        // all-ones start vector lies in the kernel of this Gram matrix
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        assert!((spectral_norm(&a) - 2.0).abs() < 1e-8);
    }

    #[test]
    fn spectral_norm_matches_transpose() {
        let mut s = Stream::new(3, "spectral", &[]);
        for k in 0..10 {
            let a = random_matrix(4 + k % 3, 6, &mut s);
            let na = spectral_norm(&a);
            let nat = spectral_norm(&a.transpose());
            assert!((na - nat).abs() <= 1e-8 * na.max(1.0));
        }
    }

    #[test]
    fn spd_inverse_diag_and_residual() {
        let d = DenseMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let inv = spd_inverse(&d).unwrap();
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((inv.get(1, 1) - 0.25).abs() < 1e-12);

        let mut s = Stream::new(5, "spd", &[]);
        let b = random_matrix(5, 5, &mut s);
        let mut a = b.gram();
        a.add_diag(0.5);
        let inv = spd_inverse(&a).unwrap();
        let resid = a.matmul(&inv).sub(&DenseMatrix::identity(5)).fro_norm();
        assert!(resid <= 1e-8 * 5.0, "residual {resid}");
    }

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let a = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(spd_inverse(&a), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn logdet_diag_and_eig_crosscheck() {
        let d = DenseMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        assert!((logdet_spd(&d).unwrap() - 6.0_f64.ln()).abs() < 1e-12);
        assert!(logdet_spd(&DenseMatrix::identity(4)).unwrap().abs() < 1e-12);

        let mut s = Stream::new(9, "logdet", &[]);
        let b = random_matrix(4, 4, &mut s);
        let mut a = b.gram();
        a.add_diag(1.0);
        let ld = logdet_spd(&a).unwrap();
        let (vals, _) = sym_eig(&a).unwrap();
        let ld_eig: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((ld - ld_eig).abs() <= 1e-8 * ld.abs().max(1.0));
    }

    #[test]
    fn spd_inverse_involution() {
        let mut s = Stream::new(13, "invinv", &[]);
        let b = random_matrix(4, 4, &mut s);
        let mut a = b.gram();
        a.add_diag(1.0);
        let back = spd_inverse(&spd_inverse(&a).unwrap()).unwrap();
        assert!(back.sub(&a).fro_norm() <= 1e-6 * a.fro_norm());
    }

    #[test]
    fn sym_eig_trivial_cases() {
        let d = DenseMatrix::from_vec(2, 2, vec![5.0, 0.0, 0.0, 1.0]).unwrap();
        let (vals, vecs) = sym_eig(&d).unwrap();
        assert!((vals[0] - 5.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs.get(0, 0).abs() - 1.0).abs() < 1e-12);

        // [[0,1],[1,0]] has eigenvalues 1 and -1
        let f = DenseMatrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (vals, _) = sym_eig(&f).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_reconstructs() {
        let mut s = Stream::new(21, "eig", &[]);
        let mut a = random_matrix(4, 4, &mut s);
        a.symmetrize();
        let (vals, p) = sym_eig(&a).unwrap();
        let mut d = DenseMatrix::zeros(4, 4);
        for i in 0..4 {
            d.set(i, i, vals[i]);
        }
        let recon = p.matmul(&d).matmul_nt(&p);
        assert!(recon.sub(&a).fro_norm() < 1e-10 * a.fro_norm().max(1.0));
        let orth = p.gram().sub(&DenseMatrix::identity(4)).fro_norm();
        assert!(orth < 1e-10);
    }

    #[test]
    fn spectral_norm_invariant_under_orthonormal_columns() {
        // Q with orthonormal columns from a QR-like construction
        let mut s = Stream::new(33, "orth", &[]);
        let g = random_matrix(6, 6, &mut s);
        let mut a = g.gram();
        a.add_diag(1.0);
        let (_, q) = sym_eig(&a).unwrap(); // orthonormal 6x6
        let b = random_matrix(6, 4, &mut s);
        let qb = q.matmul(&b);
        let nb = spectral_norm(&b);
        assert!((spectral_norm(&qb) - nb).abs() <= 1e-8 * nb.max(1.0));
    }
}
