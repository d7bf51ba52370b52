//! Bounded simplex-structured matrix factorization: minimize
//! `0.5 ||M o (X - WH)||_F^2` with the columns of `W` in an interval `[a, b]`
//! and the columns of `H` on the probability simplex, via inertial block
//! majorization-minimization whose momentum is never restarted across block
//! switches.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::lipschitz_norm;
use crate::matrix::DenseMatrix;
use crate::projections::{project_box_columns, project_simplex_columns, Bounds};
use crate::rng::Stream;
use crate::solver::{
    extrapolate, ConvergenceTrace, FactorPair, NesterovState, ObservationMask, SolverOptions,
    TraceEntry,
};

/// Which translation is removed from the data before solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    None,
    /// Subtract the global mean of the (observed) entries from everything.
    Global,
    /// Subtract each row's (observed) mean.
    RowWise,
}

/// One bounded factorization problem.
#[derive(Debug, Clone)]
pub struct BssmfProblem {
    pub x: DenseMatrix,
    pub mask: Option<ObservationMask>,
    pub bounds: Bounds,
    pub rank: usize,
    pub centering: Centering,
}

impl BssmfProblem {
    /// Bounds taken from the observed data: `a_i` and `b_i` are the smallest
    /// and largest observed entries of row `i`.
    pub fn auto_bounds(x: &DenseMatrix, mask: Option<&ObservationMask>) -> Result<Bounds> {
        let (m, n) = x.shape();
        let mut lower = vec![f64::INFINITY; m];
        let mut upper = vec![f64::NEG_INFINITY; m];
        for i in 0..m {
            for j in 0..n {
                if mask.map_or(true, |ms| ms.weights.get(i, j) != 0.0) {
                    lower[i] = lower[i].min(x.get(i, j));
                    upper[i] = upper[i].max(x.get(i, j));
                }
            }
        }
        for i in 0..m {
            if !lower[i].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has no observed entry to derive bounds from"
                )));
            }
        }
        Bounds::new(lower, upper)
    }
}

/// Removes the chosen translation from `x`, returning the centered data and
/// the per-row shift `mu`. With a mask, means run over observed entries only.
pub fn center_data(
    x: &DenseMatrix,
    mask: Option<&ObservationMask>,
    mode: Centering,
) -> (DenseMatrix, Vec<f64>) {
    let (m, n) = x.shape();
    let mu: Vec<f64> = match mode {
        Centering::None => vec![0.0; m],
        Centering::Global => {
            let mut sum = 0.0;
            let mut count = 0.0;
            for i in 0..m {
                for j in 0..n {
                    let w = mask.map_or(1.0, |ms| ms.weights.get(i, j));
                    if w != 0.0 {
                        sum += x.get(i, j);
                        count += 1.0;
                    }
                }
            }
            let mean = if count > 0.0 { sum / count } else { 0.0 };
            vec![mean; m]
        }
        Centering::RowWise => (0..m)
            .map(|i| {
                let mut sum = 0.0;
                let mut count = 0.0;
                for j in 0..n {
                    let w = mask.map_or(1.0, |ms| ms.weights.get(i, j));
                    if w != 0.0 {
                        sum += x.get(i, j);
                        count += 1.0;
                    }
                }
                if count > 0.0 {
                    sum / count
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let centered = DenseMatrix::from_fn(m, n, |i, j| x.get(i, j) - mu[i]);
    (centered, mu)
}

/// Undoes the centering on the basis factor: `W = W_c + mu e^T`. For any
/// column-stochastic `H` this leaves the product translated by exactly
/// `mu e^T`, so the uncentered pair reproduces the original data.
pub fn uncenter_w(wc: &DenseMatrix, mu: &[f64]) -> DenseMatrix {
    assert_eq!(wc.rows(), mu.len());
    DenseMatrix::from_fn(wc.rows(), wc.cols(), |i, k| wc.get(i, k) + mu[i])
}

/// Affine map of the data onto `[0, 1]^m`: `(X - a e^T) / ((b - a) e^T)`.
/// Rows with `a_i = b_i` are rejected; they carry no information and should
/// be removed by the caller.
pub fn normalize_to_unit_box(x: &DenseMatrix, bounds: &Bounds) -> Result<DenseMatrix> {
    if bounds.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "bounds have {} rows, X has {}",
            bounds.len(),
            x.rows()
        )));
    }
    for i in 0..x.rows() {
        if bounds.upper[i] - bounds.lower[i] <= 0.0 {
            return Err(Error::DegenerateRow(i));
        }
    }
    Ok(DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        (x.get(i, j) - bounds.lower[i]) / (bounds.upper[i] - bounds.lower[i])
    }))
}

/// Inverse of [`normalize_to_unit_box`].
pub fn denormalize_from_unit_box(xn: &DenseMatrix, bounds: &Bounds) -> Result<DenseMatrix> {
    if bounds.len() != xn.rows() {
        return Err(Error::DimensionMismatch(format!(
            "bounds have {} rows, X has {}",
            bounds.len(),
            xn.rows()
        )));
    }
    Ok(DenseMatrix::from_fn(xn.rows(), xn.cols(), |i, j| {
        bounds.lower[i] + xn.get(i, j) * (bounds.upper[i] - bounds.lower[i])
    }))
}

/// `0.5 ||M o (X - WH)||_F^2` (mask absent means all ones).
pub fn bssmf_objective(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: Option<&ObservationMask>,
) -> f64 {
    let wh = w.matmul(h);
    let mut sum = 0.0;
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let m = mask.map_or(1.0, |ms| ms.weights.get(i, j));
            sum += (m * (x.get(i, j) - wh.get(i, j))).powi(2);
        }
    }
    0.5 * sum
}

/// Weighted residual `M^{o2} o (X - WH)`, the matrix the gradients share.
fn weighted_residual(
    x: &DenseMatrix,
    wh: &DenseMatrix,
    mask_sq: Option<&DenseMatrix>,
) -> DenseMatrix {
    let mut resid = x.sub(wh);
    if let Some(msq) = mask_sq {
        resid = resid.hadamard(msq);
    }
    resid
}

/// Fits the bounded simplex-structured model.
///
/// Per outer iteration: `inner_w` extrapolated projected-gradient steps on `W`
/// (clamped to the interval) followed by `inner_h` steps on `H` (projected on
/// the simplex). Step sizes are `1 / ||HH^T||` and `1 / ||W^T W||`; the two
/// Nesterov sequences keep evolving across block switches.
pub fn bssmf_fit(
    problem: &BssmfProblem,
    opts: &SolverOptions,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let x = &problem.x;
    let (m, n) = x.shape();
    let r = problem.rank;
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} must lie in [1, min(m, n) = {}]",
            m.min(n)
        )));
    }
    if problem.bounds.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "bounds have {} rows, X has {m}",
            problem.bounds.len()
        )));
    }
    for i in 0..m {
        if problem.bounds.lower[i] > problem.bounds.upper[i] {
            return Err(Error::InvalidBounds(i));
        }
    }
    if let Some(mask) = &problem.mask {
        if mask.weights.shape() != x.shape() {
            return Err(Error::DimensionMismatch(
                "mask shape differs from data".into(),
            ));
        }
        if mask.observed_count() == 0 {
            return Err(Error::EmptyMask);
        }
    }

    let mut trace = ConvergenceTrace::new();
    // sanity warning when the bounds cut into the observed data
    let observed_bounds = BssmfProblem::auto_bounds(x, problem.mask.as_ref())?;
    for i in 0..m {
        if problem.bounds.lower[i] > observed_bounds.lower[i] + 1e-12
            || problem.bounds.upper[i] < observed_bounds.upper[i] - 1e-12
        {
            trace.warn(format!(
                "bounds [{}, {}] at row {i} exclude observed data in [{}, {}]",
                problem.bounds.lower[i],
                problem.bounds.upper[i],
                observed_bounds.lower[i],
                observed_bounds.upper[i]
            ));
            break;
        }
    }

    let (xc, mu) = center_data(x, problem.mask.as_ref(), problem.centering);
    let bounds_c = problem.bounds.shifted(&mu);
    let mask_sq = problem.mask.as_ref().map(|ms| ms.squared());

    // initialization: W uniform inside the (shifted) interval, H uniform then
    // projected on the simplex
    let mut wstream = Stream::new(opts.seed, "bssmf-w", &[]);
    let mut w = DenseMatrix::from_fn(m, r, |i, _| {
        let lo = if bounds_c.lower[i].is_finite() {
            bounds_c.lower[i]
        } else {
            observed_bounds.lower[i] - mu[i]
        };
        let hi = if bounds_c.upper[i].is_finite() {
            bounds_c.upper[i]
        } else {
            observed_bounds.upper[i] - mu[i]
        };
        if hi > lo {
            wstream.uniform_in(lo, hi)
        } else {
            lo
        }
    });
    let mut hstream = Stream::new(opts.seed, "bssmf-h", &[]);
    let h0 = DenseMatrix::from_fn(r, n, |_, _| hstream.uniform());
    let mut h = project_simplex_columns(&h0, 1.0);

    let mut w_old = w.clone();
    let mut h_old = h.clone();
    let mut l_w = lipschitz_norm(&h.gram_t());
    let mut l_h = lipschitz_norm(&w.gram());
    let mut w_state = NesterovState::new(l_w);
    let mut h_state = NesterovState::new(l_h);

    let start = Instant::now();
    let mut prev_objective = f64::INFINITY;
    for iter in 0..opts.outer {
        for _ in 0..opts.inner_w {
            let beta = w_state.beta(l_w);
            let w_bar = extrapolate(&w, &w_old, beta);
            w_old = w;
            // gradient step: W <- [Wbar + (M^2 o (X - Wbar H)) H^T / L]_a^b
            let resid = weighted_residual(&xc, &w_bar.matmul(&h), mask_sq.as_ref());
            let mut next = w_bar;
            next.axpy(1.0 / l_w, &resid.matmul_nt(&h));
            w = project_box_columns(&next, &bounds_c)?;
        }
        l_h = lipschitz_norm(&w.gram());
        for _ in 0..opts.inner_h {
            let beta = h_state.beta(l_h);
            let h_bar = extrapolate(&h, &h_old, beta);
            h_old = h;
            let resid = weighted_residual(&xc, &w.matmul(&h_bar), mask_sq.as_ref());
            let mut next = h_bar;
            next.axpy(1.0 / l_h, &w.matmul_tn(&resid));
            h = project_simplex_columns(&next, 1.0);
        }
        l_w = lipschitz_norm(&h.gram_t());

        let fit = bssmf_objective(&xc, &w, &h, problem.mask.as_ref());
        trace.push(TraceEntry {
            iter,
            elapsed_s: start.elapsed().as_secs_f64(),
            fit,
            reg: 0.0,
            objective: fit,
            lambda: None,
            gamma: None,
            primal_residual: None,
        });
        if opts.rel_tol > 0.0 && prev_objective.is_finite() {
            let denom = prev_objective.abs().max(f64::MIN_POSITIVE);
            if (prev_objective - fit).abs() / denom < opts.rel_tol {
                break;
            }
        }
        prev_objective = fit;
    }

    let w_final = uncenter_w(&w, &mu);
    Ok((FactorPair::new(w_final, h), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::fixture;
    use crate::metrics::relative_error;
    use crate::rng::Stream;

    fn simplex_cols(r: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut s = Stream::new(seed, "test-h", &[]);
        let raw = DenseMatrix::from_fn(r, n, |_, _| s.uniform());
        project_simplex_columns(&raw, 1.0)
    }

    #[test]
    fn centering_modes() {
        let x = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (xc, mu) = center_data(&x, None, Centering::None);
        assert_eq!(xc, x);
        assert_eq!(mu, vec![0.0, 0.0]);

        let (xc, mu) = center_data(&x, None, Centering::RowWise);
        assert_eq!(mu, vec![2.0, 5.0]);
        for i in 0..2 {
            let sum: f64 = xc.row(i).iter().sum();
            assert!(sum.abs() < 1e-12);
        }

        let (_, mu) = center_data(&x, None, Centering::Global);
        assert_eq!(mu, vec![3.5, 3.5]);

        // constant data centers to zero row-wise
        let c = DenseMatrix::from_vec(2, 3, vec![4.0; 6]).unwrap();
        let (cc, mu) = center_data(&c, None, Centering::RowWise);
        assert_eq!(mu, vec![4.0, 4.0]);
        assert_eq!(cc.max_abs(), 0.0);
    }

    #[test]
    fn row_centering_shrinks_gram_norm() {
        let mut s = Stream::new(12, "center", &[]);
        let x = DenseMatrix::from_fn(8, 12, |_, _| s.uniform_in(0.0, 5.0));
        let (xc, _) = center_data(&x, None, Centering::RowWise);
        let full = crate::linalg::spectral_norm(&x.gram());
        let centered = crate::linalg::spectral_norm(&xc.gram());
        assert!(centered <= full + 1e-9, "{centered} > {full}");
    }

    #[test]
    fn uncentering_identity() {
        let mut s = Stream::new(13, "uncenter", &[]);
        let w = DenseMatrix::from_fn(5, 3, |_, _| s.uniform());
        let mu: Vec<f64> = (0..5).map(|_| s.uniform_in(-2.0, 2.0)).collect();
        let h = simplex_cols(3, 7, 4);
        // (W - mu e^T) H == W H - mu e^T for column-stochastic H
        let wc = DenseMatrix::from_fn(5, 3, |i, k| w.get(i, k) - mu[i]);
        let lhs = wc.matmul(&h);
        let wh = w.matmul(&h);
        let rhs = DenseMatrix::from_fn(5, 7, |i, j| wh.get(i, j) - mu[i]);
        assert!(lhs.sub(&rhs).max_abs() < 1e-12);

        assert_eq!(uncenter_w(&wc, &vec![0.0; 5]), wc);
        assert!(uncenter_w(&wc, &mu).sub(&w).max_abs() < 1e-14);
    }

    #[test]
    fn centering_objective_equivalence() {
        let mut s = Stream::new(14, "obj-eq", &[]);
        let x = DenseMatrix::from_fn(6, 9, |_, _| s.uniform());
        let w = DenseMatrix::from_fn(6, 3, |_, _| s.uniform());
        let h = simplex_cols(3, 9, 5);
        let (xc, mu) = center_data(&x, None, Centering::RowWise);
        let wc = DenseMatrix::from_fn(6, 3, |i, k| w.get(i, k) - mu[i]);
        let a = bssmf_objective(&x, &w, &h, None);
        let b = bssmf_objective(&xc, &wc, &h, None);
        assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn unit_box_round_trip() {
        let bounds = Bounds::new(vec![1.0, -2.0], vec![5.0, 3.0]).unwrap();
        let mut s = Stream::new(15, "box", &[]);
        let x = DenseMatrix::from_fn(2, 6, |i, _| s.uniform_in(bounds.lower[i], bounds.upper[i]));
        let xn = normalize_to_unit_box(&x, &bounds).unwrap();
        assert!(xn.min_entry() >= 0.0 && xn.max_entry() <= 1.0);
        assert!((xn.get(0, 0) - (x.get(0, 0) - 1.0) / 4.0).abs() < 1e-15);
        let back = denormalize_from_unit_box(&xn, &bounds).unwrap();
        assert!(back.sub(&x).max_abs() < 1e-12);

        let degenerate = Bounds::new(vec![1.0, 2.0], vec![5.0, 2.0]).unwrap();
        assert!(matches!(
            normalize_to_unit_box(&x, &degenerate),
            Err(Error::DegenerateRow(1))
        ));
    }

    #[test]
    fn masked_gradient_matches_finite_differences() {
        let mut s = Stream::new(16, "fd", &[]);
        let x = DenseMatrix::from_fn(5, 7, |_, _| s.uniform());
        let w = DenseMatrix::from_fn(5, 3, |_, _| s.uniform());
        let h = simplex_cols(3, 7, 6);
        let weights = DenseMatrix::from_fn(5, 7, |_, _| if s.uniform() < 0.3 { 0.0 } else { 0.7 });
        let mask = ObservationMask::new(weights).unwrap();
        // analytic gradient in H of 0.5 ||M o (X - WH)||^2
        let msq = mask.squared();
        let resid = weighted_residual(&x, &w.matmul(&h), Some(&msq));
        let grad = w.matmul_tn(&resid).scale(-1.0);
        let eps = 1e-6;
        for (i, j) in [(0usize, 0usize), (1, 3), (2, 6)] {
            let mut hp = h.clone();
            hp.set(i, j, h.get(i, j) + eps);
            let mut hm = h.clone();
            hm.set(i, j, h.get(i, j) - eps);
            let fd = (bssmf_objective(&x, &w, &hp, Some(&mask))
                - bssmf_objective(&x, &w, &hm, Some(&mask)))
                / (2.0 * eps);
            let g = grad.get(i, j);
            assert!(
                (fd - g).abs() <= 1e-5 * g.abs().max(1.0),
                "fd {fd} vs analytic {g} at ({i},{j})"
            );
        }
    }

    #[test]
    fn rank_one_feasible_data_is_fit_exactly() {
        let w = DenseMatrix::from_vec(4, 1, vec![0.5, 1.5, 2.5, 0.25]).unwrap();
        let h = DenseMatrix::from_raw(1, 6, vec![1.0; 6]);
        let x = w.matmul(&h);
        let problem = BssmfProblem {
            x: x.clone(),
            mask: None,
            bounds: Bounds::constant(0.0, 3.0, 4).unwrap(),
            rank: 1,
            centering: Centering::None,
        };
        let opts = SolverOptions::new(1, 3).with_budgets(100, 10, 10);
        let (factors, trace) = bssmf_fit(&problem, &opts).unwrap();
        let err = relative_error(&x, &factors.w, &factors.h, None).unwrap();
        assert!(err < 1e-10, "relative error {err}");
        assert!(trace.final_objective().unwrap() <= trace.entries[0].objective + 1e-12);
    }

    #[test]
    fn full_mask_equals_no_mask() {
        let x = fixture("example1_X").unwrap();
        let bounds = Bounds::constant(0.0, 3.0, 6).unwrap();
        let opts = SolverOptions::new(3, 11).with_budgets(40, 5, 5);
        let base = BssmfProblem {
            x: x.clone(),
            mask: None,
            bounds: bounds.clone(),
            rank: 3,
            centering: Centering::None,
        };
        let masked = BssmfProblem {
            mask: Some(ObservationMask::ones(6, 6)),
            ..base.clone()
        };
        let (fa, _) = bssmf_fit(&base, &opts).unwrap();
        let (fb, _) = bssmf_fit(&masked, &opts).unwrap();
        assert!(fa.w.sub(&fb.w).max_abs() < 1e-12);
        assert!(fa.h.sub(&fb.h).max_abs() < 1e-12);
    }

    #[test]
    fn iterates_stay_feasible_and_objective_descends() {
        let x = fixture("example1_X").unwrap();
        let bounds = Bounds::constant(0.0, 3.0, 6).unwrap();
        let problem = BssmfProblem {
            x,
            mask: None,
            bounds,
            rank: 3,
            centering: Centering::RowWise,
        };
        let opts = SolverOptions::new(3, 5).with_budgets(60, 10, 10);
        let (factors, trace) = bssmf_fit(&problem, &opts).unwrap();
        assert!(factors.w.min_entry() >= -1e-12);
        assert!(factors.w.max_entry() <= 3.0 + 1e-12);
        for j in 0..factors.h.cols() {
            let sum: f64 = (0..3).map(|i| factors.h.get(i, j)).sum();
            assert!((sum - 1.0).abs() <= 1e-10);
            for i in 0..3 {
                assert!(factors.h.get(i, j) >= 0.0);
            }
        }
        let first = trace.entries.first().unwrap().objective;
        let last = trace.entries.last().unwrap().objective;
        assert!(last <= first + 1e-12);
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let x = DenseMatrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        let problem = BssmfProblem {
            x,
            mask: None,
            bounds: Bounds {
                lower: vec![1.0, 0.0],
                upper: vec![0.0, 1.0],
            },
            rank: 1,
            centering: Centering::None,
        };
        let opts = SolverOptions::new(1, 0);
        assert!(matches!(
            bssmf_fit(&problem, &opts),
            Err(Error::InvalidBounds(0))
        ));
    }
}
