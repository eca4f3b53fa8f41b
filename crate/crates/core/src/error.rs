use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("state vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("matrix is not a projector (idempotency defect {deviation:e})")]
    NotProjector { deviation: f64 },

    #[error("projector set is not exhaustive (max |sum - I| = {deviation:e})")]
    NotExhaustive { deviation: f64 },

    #[error("projector set is not exclusive (max |P_a P_b| = {deviation:e} for members {first} and {second})")]
    NotExclusive {
        deviation: f64,
        first: usize,
        second: usize,
    },

    #[error("basis is not orthonormal (max Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("numerical failure in {context}: {detail}")]
    Numerical { context: &'static str, detail: String },

    #[error("exponent {exponent} overflows; rescale the multipliers")]
    Overflow { exponent: f64 },

    #[error("unknown history {0}")]
    UnknownHistory(String),

    #[error("invalid coarse graining: {0}")]
    InvalidPartition(String),

    #[error("coarse graining cannot be realized as projector chains: {0}")]
    UnsupportedGraining(String),

    #[error("constraint {index} target {target} lies on the boundary of its spectrum (extreme eigenvalue {extreme})")]
    Boundary {
        index: usize,
        target: f64,
        extreme: f64,
    },

    #[error("constraints are linearly dependent (smallest normalized Gram eigenvalue {min_eigenvalue:e})")]
    DegenerateConstraints { min_eigenvalue: f64 },

    #[error("multiplier solve did not converge after {iterations} iterations (residual {residual:e}, |lambda| = {multiplier_norm:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        multiplier_norm: f64,
    },

    #[error("{what} = {value} exceeds the cap {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("wave packet reached the grid edge (edge probability {probability:e} at t = {time})")]
    Truncation { probability: f64, time: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of a numerical procedure rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. }
                | Error::Overflow { .. }
                | Error::NonConvergence { .. }
                | Error::Boundary { .. }
                | Error::DegenerateConstraints { .. }
                | Error::Truncation { .. }
        )
    }

    pub fn is_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }

    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
