//! Greedy column selection for separable NMF: plain SPA, the randomized
//! criterion `f(x) = x^T Q Q^T x` that interpolates between SPA and VCA, and
//! the nonnegative least squares solve for `H` given the selected columns.

use crate::error::{Error, Result};
use crate::linalg::{lipschitz_norm, SpdFactorization};
use crate::matrix::{dot, norm2, DenseMatrix};
use crate::projections::project_nonneg;
use crate::rng::Stream;
use crate::solver::{extrapolate, NesterovState};

/// Configuration of the randomized selection criterion.
#[derive(Debug, Clone)]
pub struct RandSpaConfig {
    pub rank: usize,
    /// Number of columns of the random matrix `Q`; `nu = m`, `kappa = 1`
    /// recovers SPA, `nu = 1` the VCA-like limit. The recovery guarantees
    /// need `nu >= rank`, which is not enforced.
    pub nu: usize,
    /// Condition number of `Q Q^T`; column norms are `1, 1/sqrt(kappa), ...`.
    pub kappa: f64,
    pub runs: usize,
    pub seed: u64,
}

impl RandSpaConfig {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.nu < 1 {
            return Err(Error::InvalidArgument("nu must be >= 1".into()));
        }
        if self.nu > m {
            return Err(Error::InvalidArgument(format!(
                "nu = {} exceeds the number of rows m = {m}",
                self.nu
            )));
        }
        if self.kappa < 1.0 {
            return Err(Error::InvalidArgument("kappa must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidArgument("runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one column-selection pass.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Selected column indices, in selection order (0-based, distinct).
    pub indices: Vec<usize>,
    /// `||P_perp X(:, j_k)||_2` just before each deflation.
    pub residual_norms: Vec<f64>,
    /// `||X - WH||_F / ||X||_F` after the NNLS solve with `W = X(:, J)`.
    pub relative_error: f64,
    pub nnls_converged: bool,
}

/// Relative numerical-rank guard: selection stops with `ZeroResidual` when the
/// best criterion value falls to this fraction of `||X||_F^2`.
const RANK_GUARD: f64 = 1e-14;

pub(crate) enum StepCriterion {
    Norm2,
    Q(DenseMatrix),
}

/// Selected indices, their residual norms, and the deflation directions.
pub(crate) type Selection = (Vec<usize>, Vec<f64>, Vec<Vec<f64>>);

/// Runs the recursive selection, returning the chosen indices, residual norms,
/// and the orthonormal deflation directions.
pub(crate) fn select_columns(
    x: &DenseMatrix,
    r: usize,
    mut criterion_for_step: impl FnMut(usize) -> StepCriterion,
) -> Result<Selection> {
    let (m, n) = x.shape();
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} must lie in [1, min(m, n) = {}]",
            m.min(n)
        )));
    }
    let guard = RANK_GUARD * x.fro_norm_sq();
    let mut residual = x.clone();
    let mut selected = Vec::with_capacity(r);
    let mut taken = vec![false; n];
    let mut residual_norms = Vec::with_capacity(r);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut col = vec![0.0; m];

    for step in 0..r {
        let crit = criterion_for_step(step);
        let scores: Vec<f64> = match &crit {
            StepCriterion::Norm2 => (0..n)
                .map(|j| {
                    let mut s = 0.0;
                    for i in 0..m {
                        s += residual.get(i, j).powi(2);
                    }
                    s
                })
                .collect(),
            StepCriterion::Q(q) => {
                // f(x) = ||Q^T x||^2, evaluated for all columns at once
                let qt_r = q.matmul_tn(&residual);
                (0..n)
                    .map(|j| {
                        let mut s = 0.0;
                        for i in 0..qt_r.rows() {
                            s += qt_r.get(i, j).powi(2);
                        }
                        s
                    })
                    .collect()
            }
        };
        // lowest index wins ties; previously selected columns are skipped
        let mut best_j = None;
        let mut best_f = f64::NEG_INFINITY;
        for (j, &f) in scores.iter().enumerate() {
            if !taken[j] && f > best_f {
                best_f = f;
                best_j = Some(j);
            }
        }
        let j = best_j.ok_or(Error::ZeroResidual {
            found: step,
            requested: r,
        })?;
        if best_f <= guard {
            return Err(Error::ZeroResidual {
                found: step,
                requested: r,
            });
        }
        residual.col_into(j, &mut col);
        let nrm = norm2(&col);
        residual_norms.push(nrm);
        selected.push(j);
        taken[j] = true;
        // deflate: R <- R - v (v^T R)
        let v: Vec<f64> = col.iter().map(|&c| c / nrm).collect();
        let vt_r = residual.matvec_t(&v);
        for (i, &vi) in v.iter().enumerate() {
            let row = residual.row_mut(i);
            for (rj, &c) in row.iter_mut().zip(&vt_r) {
                *rj -= vi * c;
            }
        }
        basis.push(v);
    }
    Ok((selected, residual_norms, basis))
}

fn finish_selection(
    x: &DenseMatrix,
    indices: Vec<usize>,
    residual_norms: Vec<f64>,
) -> Result<SelectionResult> {
    let m = x.rows();
    let mut w = DenseMatrix::zeros(m, indices.len());
    let mut col = vec![0.0; m];
    for (k, &j) in indices.iter().enumerate() {
        x.col_into(j, &mut col);
        w.set_col(k, &col);
    }
    let nnls = nnls_solve(&w, x);
    let relative_error = crate::metrics::relative_error(x, &w, &nnls.h, None)?;
    Ok(SelectionResult {
        indices,
        residual_norms,
        relative_error,
        nnls_converged: nnls.converged,
    })
}

/// Plain SPA when `q` is absent; with `q` given, the fixed quadratic
/// criterion `f(x) = x^T Q Q^T x` is used at every step.
pub fn spa_select(x: &DenseMatrix, r: usize, q: Option<&DenseMatrix>) -> Result<SelectionResult> {
    if let Some(q) = q {
        if q.rows() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "Q has {} rows, X has {}",
                q.rows(),
                x.rows()
            )));
        }
    }
    let (indices, norms, _) = select_columns(x, r, |_| match q {
        Some(q) => StepCriterion::Q(q.clone()),
        None => StepCriterion::Norm2,
    })?;
    finish_selection(x, indices, norms)
}

/// Random `m x nu` matrix with mutually orthogonal columns of norms
/// `1, 1/sqrt(kappa), ..., 1/sqrt(kappa)`, drawn from the stream identified by
/// `(seed, run_index, step)`.
pub fn gen_random_q(
    m: usize,
    config: &RandSpaConfig,
    run_index: usize,
    step: usize,
) -> Result<DenseMatrix> {
    config.validate(m)?;
    let mut stream = Stream::new(config.seed, "randspa-q", &[run_index as u64, step as u64]);
    let nu = config.nu;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(nu);
    for _ in 0..nu {
        let mut attempts = 0;
        loop {
            let mut c: Vec<f64> = (0..m).map(|_| stream.normal()).collect();
            // modified Gram-Schmidt against the accepted columns
            for prev in &cols {
                let proj = dot(&c, prev);
                for (ci, &pi) in c.iter_mut().zip(prev) {
                    *ci -= proj * pi;
                }
            }
            let nrm = norm2(&c);
            if nrm > 1e-10 {
                for ci in c.iter_mut() {
                    *ci /= nrm;
                }
                cols.push(c);
                break;
            }
            attempts += 1;
            if attempts > 100 {
                return Err(Error::RankDeficient);
            }
        }
    }
    let scale = 1.0 / config.kappa.sqrt();
    let mut q = DenseMatrix::zeros(m, nu);
    for (j, c) in cols.iter().enumerate() {
        let s = if j == 0 { 1.0 } else { scale };
        for i in 0..m {
            q.set(i, j, c[i] * s);
        }
    }
    Ok(q)
}

/// Multi-start randomized SPA. A fresh `Q` is drawn at every column-extraction
/// step of every run; the run with the lowest post-NNLS relative error wins,
/// ties going to the lowest run index.
pub fn randspa(x: &DenseMatrix, config: &RandSpaConfig) -> Result<SelectionResult> {
    config.validate(x.rows())?;
    let mut best: Option<SelectionResult> = None;
    for run in 0..config.runs {
        let (indices, norms, _) = select_columns(x, config.rank, |step| {
            StepCriterion::Q(gen_random_q(x.rows(), config, run, step).expect("validated config"))
        })?;
        let result = finish_selection(x, indices, norms)?;
        if best
            .as_ref()
            .map_or(true, |b| result.relative_error < b.relative_error)
        {
            best = Some(result);
        }
    }
    Ok(best.expect("runs >= 1"))
}

/// Outcome of the NNLS solve, with soft flags instead of hard failures.
#[derive(Debug, Clone)]
pub struct NnlsOutcome {
    pub h: DenseMatrix,
    /// False when the iteration budget ran out before the KKT tolerance.
    pub converged: bool,
    /// True when `W^T W` failed a Cholesky probe, i.e., `W` is numerically
    /// rank deficient and the minimizer is not unique.
    pub gram_singular: bool,
}

const NNLS_MAX_ITERS: usize = 2000;
const NNLS_KKT_TOL: f64 = 1e-6;

/// Solves `min_{H >= 0} 0.5 ||X - WH||_F^2` by accelerated projected gradient
/// (the solvers' H update with no regularizer). Accuracy is governed by the KKT
/// residual `||min(H, grad)||_inf <= 1e-6 ||W^T X(:,j)||_inf` per column.
pub fn nnls_solve(w: &DenseMatrix, x: &DenseMatrix) -> NnlsOutcome {
    assert_eq!(w.rows(), x.rows(), "W and X must have the same row count");
    let (r, n) = (w.cols(), x.cols());
    let gram = w.gram();
    let gram_singular = SpdFactorization::new(&gram).is_err();
    let l = lipschitz_norm(&gram);
    let wx = w.matmul_tn(x);
    if l == 0.0 {
        return NnlsOutcome {
            h: DenseMatrix::zeros(r, n),
            converged: true,
            gram_singular,
        };
    }
    let col_tols: Vec<f64> = (0..n)
        .map(|j| {
            let mut t: f64 = 0.0;
            for i in 0..r {
                t = t.max(wx.get(i, j).abs());
            }
            NNLS_KKT_TOL * t
        })
        .collect();

    let mut h = DenseMatrix::zeros(r, n);
    let mut h_old = h.clone();
    let mut nesterov = NesterovState::new(l);
    let mut converged = false;
    for it in 0..NNLS_MAX_ITERS {
        let beta = nesterov.beta(l);
        let h_bar = extrapolate(&h, &h_old, beta);
        // grad at h_bar: W^T W h_bar - W^T X
        let mut grad = gram.matmul(&h_bar);
        grad.axpy(-1.0, &wx);
        h_old = h;
        let mut next = h_bar;
        next.axpy(-1.0 / l, &grad);
        h = project_nonneg(&next);
        let check_now = it % 10 == 9 || it == NNLS_MAX_ITERS - 1;
        if check_now && kkt_satisfied(&gram, &wx, &h, &col_tols) {
            converged = true;
            break;
        }
    }
    if !converged {
        converged = kkt_satisfied(&gram, &wx, &h, &col_tols);
    }
    NnlsOutcome {
        h,
        converged,
        gram_singular,
    }
}

fn kkt_satisfied(gram: &DenseMatrix, wx: &DenseMatrix, h: &DenseMatrix, tols: &[f64]) -> bool {
    let mut grad = gram.matmul(h);
    grad.axpy(-1.0, wx);
    let (r, n) = h.shape();
    for j in 0..n {
        let mut resid: f64 = 0.0;
        for i in 0..r {
            resid = resid.max(h.get(i, j).min(grad.get(i, j)).abs());
        }
        if resid > tols[j] {
            return false;
        }
    }
    true
}

/// Solves a single NNLS system `min_{y >= 0} ||A y - b||_2`; used by the SSC
/// cone-membership check.
pub fn nnls_solve_vector(a: &DenseMatrix, b: &[f64]) -> NnlsOutcome {
    let rhs = DenseMatrix::from_raw(b.len(), 1, b.to_vec());
    nnls_solve(a, &rhs)
}
