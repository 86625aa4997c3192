use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("site index {site} out of range 1..={d}")]
    InvalidSite { site: usize, d: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not unitary (relative deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("eigenvalue clusters {left} and {right} are closer than 10x the clustering tolerance {tol:e}")]
    DegeneracyAmbiguity { left: f64, right: f64, tol: f64 },

    #[error("coupling operator is zero; the minimal spectral gap is undefined")]
    DegenerateCoupling,

    #[error("invalid thermal parameters: {0}")]
    InvalidThermal(String),

    #[error("reservoir kernel: {0}")]
    Kernel(String),

    #[error("path budget exceeded: {paths:.3e} path pairs > budget {budget:.3e}; use truncated mode")]
    BudgetExceeded { paths: f64, budget: f64 },

    #[error("combinatorial budget exceeded: {0}")]
    CombinatorialBudget(String),

    #[error("reservoir symbol is not diagonal: {0}")]
    NotDiagonalSymbol(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("eigenvalue modulus {modulus} lies in the ambiguous band below the unit circle")]
    ClassificationAmbiguity { modulus: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
