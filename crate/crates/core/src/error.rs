use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("truncation depth mismatch: {left} vs {right}")]
    DepthMismatch { left: usize, right: usize },

    #[error("tensor of dimension {dim} at level {level} exceeds the 1e7 entry capacity")]
    Capacity { dim: usize, level: usize },

    #[error("symmetrisation is limited to level 8, got level {0}")]
    SymLevel(usize),

    #[error("operator arity {arity} does not match tensor level {level}")]
    Arity { arity: usize, level: usize },

    #[error("matrix is not Hurwitz: smallest real part of the spectrum is {min_real_part}")]
    NonHurwitz { min_real_part: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix exponential overflowed")]
    Overflow,

    #[error("result expected to be real has imaginary residue {0:e}")]
    ImaginaryResidue(f64),

    #[error("adaptive quadrature did not converge within {max_intervals} intervals")]
    QuadratureNonConvergence { max_intervals: usize },

    #[error("Cholesky factorisation failed: covariance is not positive definite")]
    Cholesky,

    #[error("singular linear system")]
    Singular,

    #[error("area matrix is not skew-symmetric, residual {0:e}")]
    SkewSymmetry(f64),

    #[error("slope fit needs at least 2 points above the floor, found {usable}")]
    DegenerateFit { usable: usize },

    #[error("expected signature provider failed: {0}")]
    Provider(String),

    #[error("finite difference step underflowed")]
    StepUnderflow,
}
