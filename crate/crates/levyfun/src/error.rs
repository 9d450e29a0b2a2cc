use thiserror::Error;

/// Errors raised by model construction and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid jump distribution: {0}")]
    InvalidPmf(String),

    #[error("truncation criterion unmet at cap {cap} (achieved {achieved:.3e})")]
    CapExceeded { cap: usize, achieved: f64 },

    #[error("normalizer sum of c_j q^j is degenerate ({0:e})")]
    DegenerateDenominator(f64),

    #[error("density negative beyond tolerance: {value:e} at x = {x:e}")]
    NegativeDensity { x: f64, value: f64 },

    #[error("coefficient table ill-conditioned (cancellation factor {0:.3e}); enable multiprecision")]
    IllConditioned(f64),

    #[error("quadrature failed to reach tolerance {tol:e} (estimate {estimate:e})")]
    QuadratureFailure { tol: f64, estimate: f64 },

    #[error("functional diverges")]
    DivergentFunctional,

    #[error("convergence of the functional could not be certified")]
    UncertifiedFunctional,

    #[error("coinciding hypoexponential rates")]
    DegenerateRates,

    #[error("nested-sum budget exceeded: {0} index vectors")]
    TruncationBudgetExceeded(usize),

    #[error("sample {index} needed more than {max_terms} terms")]
    MaxTermsExceeded { index: usize, max_terms: usize },

    #[error("invalid Levy tail: {0}")]
    InvalidTail(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
