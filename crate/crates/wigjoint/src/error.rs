//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be a power of two >= 8, got {0}")]
    InvalidGridSize(usize),

    #[error("grid length must be positive and finite, got {0}")]
    InvalidGridLength(f64),

    #[error("state support is clipped by the grid: tail mass {mass:.3e} exceeds {limit:.1e} ({where_})")]
    StateClipped {
        mass: f64,
        limit: f64,
        where_: &'static str,
    },

    #[error("mixture weights must be nonnegative and sum to 1: {0}")]
    InvalidWeights(String),

    #[error("density matrix is not Hermitian: max |rho - rho^H| = {0:.3e}")]
    NotHermitian(f64),

    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("operator is not positive semidefinite: min eigenvalue {0:.3e}")]
    NotPositive(f64),

    #[error("covariance matrix is invalid: {0}")]
    BadCovariance(String),

    #[error("uncertainty condition violated: det(cov) = {0} < 1/4")]
    UncertaintyViolation(f64),

    #[error("incompatible lattices: {0}")]
    IncompatibleLattices(String),

    #[error("quasi-probability check failed: {0}")]
    QuasiProbability(String),

    #[error("distribution normalization is {0}, expected 1")]
    BadNormalization(f64),

    #[error("ensemble component count exceeded: {got} > {limit}")]
    ComponentCountExceeded { got: usize, limit: usize },

    #[error("classical sampler requires a nonnegative distribution: min value {0:.3e}")]
    NegativeDistribution(f64),

    #[error("cumulant stencil invalid: {0}")]
    CumulantStencil(String),

    #[error("operation does not support this detector representation: {0}")]
    UnsupportedDetector(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed array file: {0}")]
    MalformedArray(String),
}

pub type Result<T> = std::result::Result<T, Error>;
