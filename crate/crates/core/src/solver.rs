//! Types shared by every solver: options, factor pairs, observation masks,
//! convergence traces, and the inertial (Nesterov) block state.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Iteration budgets, seed, and target rank shared by the solvers.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub rank: usize,
    /// Outer iterations (alternations between the two blocks).
    pub outer: usize,
    /// Inner iterations on the W block per outer iteration.
    pub inner_w: usize,
    /// Inner iterations on the H block per outer iteration.
    pub inner_h: usize,
    pub seed: u64,
    /// Optional stop on relative objective change; 0 disables it.
    pub rel_tol: f64,
}

impl SolverOptions {
    pub fn new(rank: usize, seed: u64) -> Self {
        Self {
            rank,
            outer: 500,
            inner_w: 20,
            inner_h: 20,
            seed,
            rel_tol: 0.0,
        }
    }

    pub fn with_budgets(mut self, outer: usize, inner_w: usize, inner_h: usize) -> Self {
        self.outer = outer;
        self.inner_w = inner_w;
        self.inner_h = inner_h;
        self
    }
}

/// Estimated factors `W` (m x r) and `H` (r x n).
#[derive(Debug, Clone)]
pub struct FactorPair {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
}

impl FactorPair {
    pub fn new(w: DenseMatrix, h: DenseMatrix) -> Self {
        debug_assert_eq!(w.cols(), h.rows());
        Self { w, h }
    }

    pub fn product(&self) -> DenseMatrix {
        self.w.matmul(&self.h)
    }
}

/// Entrywise weights in `[0, 1]`; zero marks a missing entry.
#[derive(Debug, Clone)]
pub struct ObservationMask {
    pub weights: DenseMatrix,
}

impl ObservationMask {
    pub fn new(weights: DenseMatrix) -> Result<Self> {
        let mut any = false;
        for (k, &v) in weights.data().iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "mask entry at ({}, {}) is {v}, outside [0, 1]",
                    k / weights.cols(),
                    k % weights.cols()
                )));
            }
            any |= v != 0.0;
        }
        if !any {
            return Err(Error::EmptyMask);
        }
        Ok(Self { weights })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            weights: DenseMatrix::from_raw(rows, cols, vec![1.0; rows * cols]),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.weights.data().iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn require_binary(&self) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("mask must be binary".into()))
        }
    }

    /// Squared weights, the matrix that appears in weighted gradients.
    /// For a binary mask this is the mask itself.
    pub fn squared(&self) -> DenseMatrix {
        self.weights.map(|v| v * v)
    }

    pub fn observed_count(&self) -> usize {
        self.weights.data().iter().filter(|&&v| v != 0.0).count()
    }
}

/// One recorded outer iteration.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub iter: usize,
    pub elapsed_s: f64,
    /// Data-fit term, `0.5 ||M o (X - WH)||_F^2`.
    pub fit: f64,
    /// Weighted regularizer contribution (multipliers folded in, signed).
    pub reg: f64,
    /// `fit + reg`.
    pub objective: f64,
    /// Hyperparameters in force at this iteration, when the model has them.
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    /// ADMM primal residual `||Y - HH^T||_F`, when applicable.
    pub primal_residual: Option<f64>,
}

/// Per-outer-iteration history of a solve.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
    /// True unless the solve was cut short by a guard (NaN, non-convergence).
    pub clean: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            clean: true,
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: TraceEntry) {
        self.entries.push(entry);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.entries.last().map(|e| e.objective)
    }
}

/// Nesterov sequence with the inertia cap `0.9999 sqrt(L_prev / L_curr)`,
/// carried across block switches without restarts.
#[derive(Debug, Clone)]
pub struct NesterovState {
    alpha: f64,
    l_prev: f64,
}

impl NesterovState {
    pub fn new(l0: f64) -> Self {
        Self {
            alpha: 1.0,
            l_prev: l0,
        }
    }

    /// Advances the alpha sequence and returns the extrapolation weight for a
    /// step whose Lipschitz estimate is `l_curr`.
    pub fn beta(&mut self, l_curr: f64) -> f64 {
        let alpha0 = self.alpha;
        self.alpha = 0.5 * (1.0 + (1.0 + 4.0 * alpha0 * alpha0).sqrt());
        let nesterov = (alpha0 - 1.0) / self.alpha;
        let cap = 0.9999 * (self.l_prev / l_curr).sqrt();
        let beta = nesterov.min(cap).max(0.0);
        debug_assert!(beta >= 0.0 && beta <= 0.9999 * (self.l_prev / l_curr).sqrt() + 1e-15);
        debug_assert!(beta < 1.0);
        self.l_prev = l_curr;
        beta
    }
}

/// Extrapolated point `x + beta (x - x_old)`.
pub(crate) fn extrapolate(x: &DenseMatrix, x_old: &DenseMatrix, beta: f64) -> DenseMatrix {
    let mut bar = x.clone();
    if beta != 0.0 {
        for (b, (&cur, &old)) in bar
            .data_mut()
            .iter_mut()
            .zip(x.data().iter().zip(x_old.data()))
        {
            *b = cur + beta * (cur - old);
        }
    }
    bar
}
