//! Volume-constrained and volume-regularized low-rank matrix factorizations.
//!
//! The crate covers one family of models around the factorization `X ~ WH`:
//!
//! - bounded simplex-structured factorization (`bssmf`): `W` confined to an
//!   interval, `H` column-stochastic;
//! - greedy separable NMF (`separable`): SPA and its randomized variant;
//! - minimum-volume NMF and its matrix-completion variants (`minvol`);
//! - maximum-volume NMF, standard and row-normalized (`maxvol`);
//! - the projections, metrics, scattering diagnostics, and synthetic data
//!   generators those solvers need.
//!
//! All solvers are deterministic given a seed and single-threaded; concurrent
//! fits with independent options are safe.

pub mod bssmf;
pub mod datagen;
mod error;
pub mod linalg;
pub mod matrix;
pub mod maxvol;
pub mod metrics;
pub mod minvol;
pub mod projections;
pub mod rng;
pub mod separable;
pub mod solver;
pub mod ssc;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use solver::{ConvergenceTrace, FactorPair, ObservationMask, SolverOptions, TraceEntry};
