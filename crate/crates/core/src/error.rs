use thiserror::Error;

/// Errors produced by the factorization routines and numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("symmetric eigendecomposition did not converge within {0} sweeps")]
    ConvergenceFailure(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("data norm is zero on the observed set")]
    ZeroDataNorm,
    #[error("mask complement is empty: every entry is observed")]
    EmptyComplement,
    #[error("mean-removed vector is numerically zero")]
    DegenerateVector,
    #[error("factor is numerically rank deficient")]
    RankDeficient,
    #[error("matrix has negative entries beyond tolerance")]
    NegativeInput,
    #[error("residual vanished after selecting {found} of {requested} columns")]
    ZeroResidual { found: usize, requested: usize },
    #[error("invalid bounds at row {0}: lower bound exceeds upper bound")]
    InvalidBounds(usize),
    #[error("observation mask has no nonzero entry")]
    EmptyMask,
    #[error("row {0} has identical lower and upper bound")]
    DegenerateRow(usize),
    #[error("row {0} of the factor is numerically zero")]
    ZeroRow(usize),
    #[error("unknown fixture name: {0}")]
    UnknownFixture(String),
    #[error("could not draw a mask covering every row and column in {0} attempts")]
    MaskResampleExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
