//! Maximum-volume NMF: minimize `0.5 ||X - WH||_F^2 - lambda logdet(HH^T + delta I)`
//! with `W >= 0` and column-stochastic `H`, plus the row-normalized variant
//! that regularizes `logdet(Ht Ht^T + delta I)` for `Ht = S^{-1} H` and drops
//! the simplex structure.
//!
//! Two solver families are provided: an adaptive accelerated projected
//! gradient method that estimates local curvature from successive gradients,
//! and an ADMM splitting with an auxiliary symmetric variable `Y ~ HH^T` whose
//! update is a closed form in the eigenvalue domain. The ADMM `H` block is
//! minimized either by the same adaptive method or through a quartic-kernel
//! Bregman surrogate whose solution is a scaled simplex projection found by a
//! fixed point on `||H||_F^2`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{lipschitz_norm, logdet_spd, spd_inverse, spectral_norm, sym_eig};
use crate::matrix::DenseMatrix;
use crate::projections::{project_nonneg, project_simplex_columns, threshold_from_sorted};
use crate::rng::Stream;
use crate::solver::{extrapolate, ConvergenceTrace, FactorPair, SolverOptions, TraceEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxvolAlgorithm {
    /// Adaptive accelerated projected gradient on both blocks.
    Adgrad2,
    /// ADMM with the Bregman-surrogate H update.
    AdmmBregman,
    /// ADMM with adaptive-gradient H updates on the augmented Lagrangian.
    AdmmAdgrad,
}

#[derive(Debug, Clone)]
pub struct MaxvolModel {
    pub lambda: f64,
    pub delta: f64,
    pub normalized: bool,
    pub algorithm: MaxvolAlgorithm,
    pub rho: f64,
}

impl MaxvolModel {
    /// Standard MaxVol defaults: `delta = 1`, `rho = 0.01`.
    pub fn standard(lambda: f64) -> Self {
        Self {
            lambda,
            delta: 1.0,
            normalized: false,
            algorithm: MaxvolAlgorithm::Adgrad2,
            rho: 0.01,
        }
    }

    /// Normalized-variant defaults: `delta = 0.5`, adaptive gradient only.
    pub fn normalized(lambda: f64) -> Self {
        Self {
            lambda,
            delta: 0.5,
            normalized: true,
            algorithm: MaxvolAlgorithm::Adgrad2,
            rho: 0.01,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
        }
        if self.delta < 0.0 {
            return Err(Error::InvalidArgument("delta must be nonnegative".into()));
        }
        if self.normalized && self.delta <= 0.0 {
            return Err(Error::InvalidArgument(
                "the normalized variant needs delta > 0 to bound the volume range".into(),
            ));
        }
        if self.rho <= 0.0 {
            return Err(Error::InvalidArgument("rho must be positive".into()));
        }
        Ok(())
    }
}

/// Gradient of `0.5 ||X - WH||^2 - lambda logdet(HH^T + delta I)` in `H`:
/// `W^T (WH - X) - 2 lambda (HH^T + delta I)^{-1} H`.
pub fn maxvol_gradient_h(
    w: &DenseMatrix,
    h: &DenseMatrix,
    x: &DenseMatrix,
    lambda: f64,
    delta: f64,
) -> Result<DenseMatrix> {
    let mut grad = w.matmul_tn(&w.matmul(h).sub(x));
    if lambda != 0.0 {
        let mut g = h.gram_t();
        g.add_diag(delta);
        let inv = spd_inverse(&g)?;
        grad.axpy(-2.0 * lambda, &inv.matmul(h));
    }
    Ok(grad)
}

/// Row-normalized volume `logdet(Ht Ht^T + delta I)` with `Ht = S^{-1} H`.
pub fn normalized_logdet(h: &DenseMatrix, delta: f64) -> Result<f64> {
    let ht = row_normalized(h)?;
    let mut g = ht.gram_t();
    g.add_diag(delta);
    logdet_spd(&g)
}

fn row_norms(h: &DenseMatrix) -> Result<Vec<f64>> {
    let scale = h.fro_norm();
    let mut norms = Vec::with_capacity(h.rows());
    for i in 0..h.rows() {
        let nrm = h.row(i).iter().map(|&v| v * v).sum::<f64>().sqrt();
        if nrm < 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::ZeroRow(i));
        }
        norms.push(nrm);
    }
    Ok(norms)
}

fn row_normalized(h: &DenseMatrix) -> Result<DenseMatrix> {
    let norms = row_norms(h)?;
    Ok(DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| {
        h.get(i, j) / norms[i]
    }))
}

/// Gradient of the normalized objective in `H`:
/// `W^T (WH - X) - 2 lambda S^{-1} [T - diag(T Ht Ht^T)] Ht` with
/// `T = (Ht Ht^T + delta I)^{-1}`.
pub fn normalized_gradient_h(
    w: &DenseMatrix,
    h: &DenseMatrix,
    x: &DenseMatrix,
    lambda: f64,
    delta: f64,
) -> Result<DenseMatrix> {
    let mut grad = w.matmul_tn(&w.matmul(h).sub(x));
    if lambda != 0.0 {
        let norms = row_norms(h)?;
        let ht = DenseMatrix::from_fn(h.rows(), h.cols(), |i, j| h.get(i, j) / norms[i]);
        let gram = {
            let mut g = ht.gram_t();
            g.add_diag(delta);
            g
        };
        let t = spd_inverse(&gram)?;
        let t_gram = t.matmul(&ht.gram_t());
        // T - diag(T Ht Ht^T), then scaled rows 1 / ||H(i,:)||
        let r = h.rows();
        let mut inner = t.clone();
        for i in 0..r {
            inner.set(i, i, inner.get(i, i) - t_gram.get(i, i));
        }
        let mut reg = inner.matmul(&ht);
        for i in 0..r {
            for j in 0..h.cols() {
                reg.set(i, j, reg.get(i, j) / norms[i]);
            }
        }
        grad.axpy(-2.0 * lambda, &reg);
    }
    Ok(grad)
}

/// `Phi_gamma^+(x) = 0.5 (sqrt(x^2 + 4 gamma) + x)`, the positive root of
/// `z^2 - x z - gamma = 0`.
pub fn phi_plus(x: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    0.5 * ((x * x + 4.0 * gamma).sqrt() + x)
}

/// Closed-form ADMM update of the auxiliary variable:
/// `Y = Phi_{lambda/rho}^+(HH^T + delta I - Lambda / rho) - delta I`, applied
/// eigenvalue-wise after symmetrizing the input.
pub fn y_update(
    h: &DenseMatrix,
    lambda_dual: &DenseMatrix,
    rho: f64,
    lambda: f64,
    delta: f64,
) -> Result<DenseMatrix> {
    let mut a = h.gram_t();
    a.add_diag(delta);
    a.axpy(-1.0 / rho, lambda_dual);
    a.symmetrize();
    let (vals, p) = sym_eig(&a)?;
    let r = h.rows();
    let mut d = DenseMatrix::zeros(r, r);
    for i in 0..r {
        d.set(i, i, phi_plus(vals[i], lambda / rho));
    }
    let mut y = p.matmul(&d).matmul_nt(&p);
    y.add_diag(-delta);
    y.symmetrize();
    Ok(y)
}

const BREGMAN_MAX_PASSES: usize = 100;
const BREGMAN_TOL: f64 = 1e-6;

/// One Bregman-surrogate minimization of the augmented Lagrangian in `H`.
///
/// Builds `Q = grad ht(H_k) - grad u(H_k)` for the quartic kernel
/// `ht(H) = (at/4) ||H||_F^4 + (st/2) ||H||_F^2` with `at = 6 rho` and
/// `st = 2 rho ||Y||_2 + ||W^T W - 2 Lambda||_2`, then solves
/// `H = [Q - e nu^T]_+ / (at ||H||_F^2 + st)` by a fixed point on `||H||_F^2`.
/// Each column of `Q` is sorted once; every pass only recomputes thresholds.
/// Returns the new iterate and whether the fixed point converged within 100
/// passes.
pub fn bregman_h_update(
    w: &DenseMatrix,
    x: &DenseMatrix,
    h: &DenseMatrix,
    y: &DenseMatrix,
    lambda_dual: &DenseMatrix,
    rho: f64,
) -> (DenseMatrix, bool) {
    let (r, n) = h.shape();
    let alpha_t = 6.0 * rho;
    let sigma_t = {
        let mut a = w.gram();
        a.axpy(-2.0, lambda_dual);
        2.0 * rho * spectral_norm(y) + spectral_norm(&a)
    };

    // grad of the surrogate's linear part at H_k:
    // W^T (W H - X) - 2 Lambda H + 2 rho (H H^T - Y) H
    let mut grad_u = w.matmul_tn(&w.matmul(h).sub(x));
    grad_u.axpy(-2.0, &lambda_dual.matmul(h));
    let mut gap = h.gram_t();
    gap.axpy(-1.0, y);
    grad_u.axpy(2.0 * rho, &gap.matmul(h));

    let h_norm_sq = h.fro_norm_sq();
    let mut q = h.scale(alpha_t * h_norm_sq + sigma_t);
    q.axpy(-1.0, &grad_u);

    // columns sorted once, reused across fixed-point passes
    let sorted_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = q.col(j);
            c.sort_by(|a, b| b.partial_cmp(a).unwrap());
            c
        })
        .collect();

    let mut s2 = h_norm_sq.max(f64::MIN_POSITIVE);
    let mut nu = vec![0.0; n];
    let mut candidate = h.clone();
    let mut converged = false;
    for _ in 0..BREGMAN_MAX_PASSES {
        let scale = alpha_t * s2 + sigma_t;
        for (j, sc) in sorted_cols.iter().enumerate() {
            nu[j] = threshold_from_sorted(sc, scale);
        }
        let mut s2_new = 0.0;
        for i in 0..r {
            for j in 0..n {
                let v = (q.get(i, j) - nu[j]).max(0.0) / scale;
                candidate.set(i, j, v);
                s2_new += v * v;
            }
        }
        let rel = (s2 - s2_new).abs() / s2.max(f64::MIN_POSITIVE);
        s2 = s2_new.max(f64::MIN_POSITIVE);
        if rel <= BREGMAN_TOL {
            converged = true;
            break;
        }
    }
    (candidate, converged)
}

/// Adaptive step state for one block, following the two-estimate scheme: a
/// step size `gamma` and an inverse-curvature estimate `Gamma`, each capped by
/// its own growth ratio.
#[derive(Debug, Clone)]
pub struct AdaptiveStepState {
    gamma: f64,
    big_gamma: f64,
    theta: f64,
    big_theta: f64,
    /// Current extrapolated point and its predecessor.
    bar: DenseMatrix,
    bar_old: DenseMatrix,
    /// Previous accepted iterate.
    x_old: DenseMatrix,
}

impl AdaptiveStepState {
    /// Initializes from `x0` with curvature estimate `l0` and performs the
    /// prescribed tiny first step `[x0 - 1e-6 grad]_proj`.
    fn new(
        x0: DenseMatrix,
        l0: f64,
        grad0: &DenseMatrix,
        project: &dyn Fn(&DenseMatrix) -> DenseMatrix,
    ) -> (Self, DenseMatrix) {
        let big_gamma = l0.max(f64::MIN_POSITIVE);
        let mut first = x0.clone();
        first.axpy(-1e-6, grad0);
        let x1 = project(&first);
        let state = Self {
            gamma: 1.0 / big_gamma,
            big_gamma,
            theta: 1e9,
            big_theta: 1e9,
            bar: x1.clone(),
            bar_old: x0.clone(),
            x_old: x0,
        };
        (state, x1)
    }

    /// One adaptive accelerated step. `grad` evaluates the gradient of the
    /// current block objective; `project` maps back to the feasible set.
    /// Returns the new iterate, or an error to signal a NaN breakdown.
    fn step(
        &mut self,
        grad: &dyn Fn(&DenseMatrix) -> Result<DenseMatrix>,
        grad_bar_old: &DenseMatrix,
        project: &dyn Fn(&DenseMatrix) -> DenseMatrix,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let grad_bar = grad(&self.bar)?;
        let diff_x = {
            let mut d = self.bar.clone();
            d.axpy(-1.0, &self.bar_old);
            d.fro_norm()
        };
        let diff_g = {
            let mut d = grad_bar.clone();
            d.axpy(-1.0, grad_bar_old);
            d.fro_norm()
        };
        let (mut gamma, mut big_gamma) = if diff_x > 0.0 && diff_g > 0.0 {
            (
                (self.gamma * (1.0 + self.theta / 2.0).sqrt()).min(diff_x / (2.0 * diff_g)),
                (self.big_gamma * (1.0 + self.big_theta / 2.0).sqrt()).min(diff_g / (2.0 * diff_x)),
            )
        } else {
            // identical successive gradients or points: reuse previous steps
            (self.gamma, self.big_gamma)
        };
        if !gamma.is_finite() || !big_gamma.is_finite() || gamma <= 0.0 || big_gamma <= 0.0 {
            gamma = self.gamma;
            big_gamma = self.big_gamma;
        }
        debug_assert!(gamma <= self.gamma * (1.0 + self.theta / 2.0).sqrt() * (1.0 + 1e-12));
        let mut moved = self.bar.clone();
        moved.axpy(-gamma, &grad_bar);
        if !moved.is_finite() {
            return Err(Error::ConvergenceFailure(0));
        }
        let x_new = project(&moved);
        if !x_new.is_finite() {
            return Err(Error::ConvergenceFailure(0));
        }
        self.theta = gamma / self.gamma;
        self.big_theta = big_gamma / self.big_gamma;
        self.bar_old = std::mem::replace(&mut self.bar, DenseMatrix::zeros(1, 1));
        let momentum = {
            let s = (gamma * big_gamma).sqrt();
            (1.0 - s) / (1.0 + s)
        };
        let mut bar_new = x_new.clone();
        for (b, (&cur, &old)) in bar_new
            .data_mut()
            .iter_mut()
            .zip(x_new.data().iter().zip(self.x_old.data()))
        {
            *b = cur + momentum * (cur - old);
        }
        self.bar = bar_new;
        self.x_old = x_new.clone();
        self.gamma = gamma;
        self.big_gamma = big_gamma;
        Ok((x_new, grad_bar))
    }
}

/// Nesterov weights without the inertia cap, for the ADMM `W` inner loop
/// (its Lipschitz constant is fixed while `H` is frozen).
#[derive(Debug, Clone)]
struct PlainNesterov {
    alpha: f64,
}

impl PlainNesterov {
    fn new() -> Self {
        Self { alpha: 1.0 }
    }

    fn beta(&mut self) -> f64 {
        let alpha0 = self.alpha;
        self.alpha = 0.5 * (1.0 + (1.0 + 4.0 * alpha0 * alpha0).sqrt());
        (alpha0 - 1.0) / self.alpha
    }
}

/// Dispatches on the configured algorithm.
pub fn maxvol_fit(
    x: &DenseMatrix,
    model: &MaxvolModel,
    opts: &SolverOptions,
) -> Result<(FactorPair, ConvergenceTrace)> {
    model.validate()?;
    if model.normalized {
        return nmaxvol_fit(x, model, opts);
    }
    match model.algorithm {
        MaxvolAlgorithm::Adgrad2 => adgrad2_fit(x, model, opts),
        MaxvolAlgorithm::AdmmBregman | MaxvolAlgorithm::AdmmAdgrad => admm_fit(x, model, opts),
    }
}

fn random_init(
    x: &DenseMatrix,
    r: usize,
    seed: u64,
    simplex_h: bool,
) -> (DenseMatrix, DenseMatrix) {
    let (m, n) = x.shape();
    let top = x.max_entry().max(f64::MIN_POSITIVE);
    let mut ws = Stream::new(seed, "maxvol-w", &[]);
    let w = DenseMatrix::from_fn(m, r, |_, _| ws.uniform_in(0.0, top));
    let mut hs = Stream::new(seed, "maxvol-h", &[]);
    let h0 = DenseMatrix::from_fn(r, n, |_, _| hs.uniform());
    let h = if simplex_h {
        project_simplex_columns(&h0, 1.0)
    } else {
        h0
    };
    (w, h)
}

/// Adaptive accelerated gradient for the standard model (`H` on the simplex).
pub fn adgrad2_fit(
    x: &DenseMatrix,
    model: &MaxvolModel,
    opts: &SolverOptions,
) -> Result<(FactorPair, ConvergenceTrace)> {
    model.validate()?;
    adgrad2_engine(x, model, opts, false)
}

/// Adaptive accelerated gradient for the normalized model (`H >= 0`, zero
/// rows re-seeded from `Uniform[0, max X]`).
pub fn nmaxvol_fit(
    x: &DenseMatrix,
    model: &MaxvolModel,
    opts: &SolverOptions,
) -> Result<(FactorPair, ConvergenceTrace)> {
    model.validate()?;
    adgrad2_engine(x, model, opts, true)
}

fn adgrad2_engine(
    x: &DenseMatrix,
    model: &MaxvolModel,
    opts: &SolverOptions,
    normalized: bool,
) -> Result<(FactorPair, ConvergenceTrace)> {
    let r = opts.rank;
    let (m, n) = x.shape();
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} must lie in [1, min(m, n) = {}]",
            m.min(n)
        )));
    }
    let (w0, h0) = random_init(x, r, opts.seed, !normalized);
    let lambda = model.lambda;
    let delta = model.delta;

    let project_w: Box<dyn Fn(&DenseMatrix) -> DenseMatrix> = Box::new(project_nonneg);
    let project_h: Box<dyn Fn(&DenseMatrix) -> DenseMatrix> = if normalized {
        Box::new(project_nonneg)
    } else {
        Box::new(|a: &DenseMatrix| project_simplex_columns(a, 1.0))
    };

    let grad_w =
        |w: &DenseMatrix, h: &DenseMatrix| -> DenseMatrix { w.matmul(h).sub(x).matmul_nt(h) };
    let grad_h = |w: &DenseMatrix, h: &DenseMatrix| -> Result<DenseMatrix> {
        if normalized {
            normalized_gradient_h(w, h, x, lambda, delta)
        } else {
            maxvol_gradient_h(w, h, x, lambda, delta)
        }
    };

    let (mut w_state, mut w) = AdaptiveStepState::new(
        w0.clone(),
        lipschitz_norm(&h0.gram_t()),
        &grad_w(&w0, &h0),
        &*project_w,
    );
    let g_h0 = grad_h(&w0, &h0)?;
    let (mut h_state, mut h) =
        AdaptiveStepState::new(h0, lipschitz_norm(&w0.gram()), &g_h0, &*project_h);

    let mut trace = ConvergenceTrace::new();
    let mut reseed_stream = Stream::new(opts.seed, "maxvol-reseed", &[]);
    let start = Instant::now();
    let mut snapshot = FactorPair::new(w.clone(), h.clone());

    'outer: for iter in 0..opts.outer {
        // W block: gradient is W (HH^T) - X H^T with the H factors frozen
        let hht = h.gram_t();
        let xht = x.matmul_nt(&h);
        let gw = |wm: &DenseMatrix| -> Result<DenseMatrix> {
            let mut g = wm.matmul(&hht);
            g.axpy(-1.0, &xht);
            Ok(g)
        };
        let mut grad_bar_old = gw(&w_state.bar_old)?;
        for _ in 0..opts.inner_w {
            match w_state.step(&gw, &grad_bar_old, &*project_w) {
                Ok((w_new, g)) => {
                    w = w_new;
                    grad_bar_old = g;
                }
                Err(_) => {
                    trace.clean = false;
                    trace.warn(format!(
                        "NaN in the W block at outer iteration {iter}; stopped"
                    ));
                    break 'outer;
                }
            }
        }

        // H block
        if normalized {
            reseed_zero_rows(&mut h_state, &mut h, x, &mut reseed_stream, &mut trace);
        }
        let gh = |hm: &DenseMatrix| -> Result<DenseMatrix> { grad_h(&w, hm) };
        let mut grad_bar_old = match gh(&h_state.bar_old) {
            Ok(g) => g,
            Err(Error::ZeroRow(_)) if normalized => {
                reseed_zero_rows(&mut h_state, &mut h, x, &mut reseed_stream, &mut trace);
                gh(&h_state.bar_old)?
            }
            Err(e) => return Err(e),
        };
        for _ in 0..opts.inner_h {
            if normalized {
                reseed_zero_rows(&mut h_state, &mut h, x, &mut reseed_stream, &mut trace);
            }
            match h_state.step(&gh, &grad_bar_old, &*project_h) {
                Ok((h_new, g)) => {
                    h = h_new;
                    grad_bar_old = g;
                }
                Err(_) => {
                    trace.clean = false;
                    trace.warn(format!(
                        "NaN in the H block at outer iteration {iter}; stopped"
                    ));
                    break 'outer;
                }
            }
        }

        if !w.is_finite() || !h.is_finite() {
            trace.clean = false;
            trace.warn(format!(
                "non-finite iterate at outer iteration {iter}; stopped"
            ));
            break;
        }
        let fit = 0.5 * x.sub(&w.matmul(&h)).fro_norm_sq();
        let reg = if lambda == 0.0 {
            0.0
        } else if normalized {
            -lambda * normalized_logdet(&h, delta)?
        } else {
            let mut g = h.gram_t();
            g.add_diag(delta);
            -lambda * logdet_spd(&g)?
        };
        trace.push(TraceEntry {
            iter,
            elapsed_s: start.elapsed().as_secs_f64(),
            fit,
            reg,
            objective: fit + reg,
            lambda: Some(lambda),
            gamma: None,
            primal_residual: None,
        });
        snapshot = FactorPair::new(w.clone(), h.clone());
    }

    Ok((snapshot, trace))
}

/// Re-seeds numerically zero rows of `H` from `Uniform[0, max X]` and resets
/// the block state at the new point.
fn reseed_zero_rows(
    state: &mut AdaptiveStepState,
    h: &mut DenseMatrix,
    x: &DenseMatrix,
    stream: &mut Stream,
    trace: &mut ConvergenceTrace,
) {
    let check = row_norms(&state.bar).err();
    let bad_current = row_norms(h).err();
    if check.is_none() && bad_current.is_none() {
        return;
    }
    let top = x.max_entry().max(f64::MIN_POSITIVE);
    let scale = h.fro_norm();
    let mut reseeded = Vec::new();
    for i in 0..h.rows() {
        let nrm = h.row(i).iter().map(|&v| v * v).sum::<f64>().sqrt();
        let bar_nrm = state.bar.row(i).iter().map(|&v| v * v).sum::<f64>().sqrt();
        if nrm < 1e-12 * scale.max(f64::MIN_POSITIVE)
            || bar_nrm < 1e-12 * scale.max(f64::MIN_POSITIVE)
        {
            for j in 0..h.cols() {
                h.set(i, j, stream.uniform_in(0.0, top));
            }
            reseeded.push(i);
        }
    }
    if !reseeded.is_empty() {
        trace.warn(format!("re-seeded zero rows {reseeded:?} of H"));
        state.bar = h.clone();
        state.bar_old = h.clone();
        state.x_old = h.clone();
    }
}

/// ADMM on the splitting `Y = HH^T`: accelerated inner loop on `W`, Bregman or
/// adaptive-gradient inner loop on `H`, eigenvalue-space update of `Y`, and
/// dual ascent on `Lambda`. The trace records the true MaxVol objective and
/// the primal residual `||Y - HH^T||_F`.
pub fn admm_fit(
    x: &DenseMatrix,
    model: &MaxvolModel,
    opts: &SolverOptions,
) -> Result<(FactorPair, ConvergenceTrace)> {
    model.validate()?;
    let r = opts.rank;
    let (m, n) = x.shape();
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} must lie in [1, min(m, n) = {}]",
            m.min(n)
        )));
    }
    let bregman = model.algorithm == MaxvolAlgorithm::AdmmBregman;
    let (mut w, mut h) = random_init(x, r, opts.seed, true);
    let rho = model.rho;
    let lambda = model.lambda;
    let delta = model.delta;

    // primal-feasible start for the splitting, zero dual
    let mut y = h.gram_t();
    let mut lambda_dual = DenseMatrix::zeros(r, r);

    let mut w_old = w.clone();
    let mut w_alpha = PlainNesterov::new();
    let project_h: Box<dyn Fn(&DenseMatrix) -> DenseMatrix> =
        Box::new(|a: &DenseMatrix| project_simplex_columns(a, 1.0));
    // adaptive state for the ADMM+Adgrad H updates, created lazily so the
    // Bregman path never touches it
    let mut h_adgrad: Option<AdaptiveStepState> = None;

    let mut trace = ConvergenceTrace::new();
    let mut bregman_stalls = 0usize;
    let start = Instant::now();
    for iter in 0..opts.outer {
        // W block: accelerated projected gradient on 0.5 ||X - WH||^2, W >= 0
        let hht = h.gram_t();
        let xht = x.matmul_nt(&h);
        let l_w = lipschitz_norm(&hht);
        for _ in 0..opts.inner_w {
            let beta = w_alpha.beta();
            let w_bar = extrapolate(&w, &w_old, beta);
            w_old = w;
            let mut next = w_bar.clone();
            let mut grad = w_bar.matmul(&hht);
            grad.axpy(-1.0, &xht);
            next.axpy(-1.0 / l_w, &grad);
            w = project_nonneg(&next);
        }

        // H block on the augmented Lagrangian
        if bregman {
            for _ in 0..opts.inner_h {
                let (h_new, converged) = bregman_h_update(&w, x, &h, &y, &lambda_dual, rho);
                if !converged {
                    if bregman_stalls == 0 {
                        trace.warn(format!(
                            "Bregman fixed point hit the pass limit (first at outer iteration {iter})"
                        ));
                    }
                    bregman_stalls += 1;
                }
                h = h_new;
                #[cfg(debug_assertions)]
                for j in 0..h.cols() {
                    let sum: f64 = (0..h.rows()).map(|i| h.get(i, j)).sum();
                    debug_assert!((sum - 1.0).abs() <= 1e-6, "column {j} sums to {sum}");
                }
            }
        } else {
            let grad_l = |hm: &DenseMatrix| -> Result<DenseMatrix> {
                // W^T (WH - X) - 2 Lambda H + 2 rho (HH^T - Y) H
                let mut g = w.matmul_tn(&w.matmul(hm).sub(x));
                g.axpy(-2.0, &lambda_dual.matmul(hm));
                let mut gap = hm.gram_t();
                gap.axpy(-1.0, &y);
                g.axpy(2.0 * rho, &gap.matmul(hm));
                Ok(g)
            };
            if h_adgrad.is_none() {
                let g0 = grad_l(&h)?;
                let (state, h1) =
                    AdaptiveStepState::new(h.clone(), lipschitz_norm(&w.gram()), &g0, &*project_h);
                h_adgrad = Some(state);
                h = h1;
            }
            let state = h_adgrad.as_mut().expect("initialized above");
            let mut grad_bar_old = grad_l(&state.bar_old)?;
            for _ in 0..opts.inner_h {
                match state.step(&grad_l, &grad_bar_old, &*project_h) {
                    Ok((h_new, g)) => {
                        h = h_new;
                        grad_bar_old = g;
                    }
                    Err(_) => {
                        trace.clean = false;
                        trace.warn(format!("NaN in the ADMM H block at iteration {iter}"));
                        return Ok((FactorPair::new(w, h), trace));
                    }
                }
            }
        }

        // Y and dual updates
        y = y_update(&h, &lambda_dual, rho, lambda, delta)?;
        let mut gap = y.clone();
        gap.axpy(-1.0, &h.gram_t());
        lambda_dual.axpy(rho, &gap);
        let primal_residual = gap.fro_norm();

        let fit = 0.5 * x.sub(&w.matmul(&h)).fro_norm_sq();
        let reg = {
            let mut g = h.gram_t();
            g.add_diag(delta);
            -lambda * logdet_spd(&g)?
        };
        trace.push(TraceEntry {
            iter,
            elapsed_s: start.elapsed().as_secs_f64(),
            fit,
            reg,
            objective: fit + reg,
            lambda: Some(lambda),
            gamma: None,
            primal_residual: Some(primal_residual),
        });
    }

    Ok((FactorPair::new(w, h), trace))
}
