use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("value {value} is outside the unit interval [0, 1]")]
    Domain { value: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("covariance matrix is not positive definite (quadrature under-resolved?)")]
    Factorization,

    #[error("Newton solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("target moments at or outside the moment-space boundary (|theta|_inf = {theta_inf_norm:.3e})")]
    BoundaryMoment { theta_inf_norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all similarity weights are zero (every tree leaf is empty)")]
    AllWeightsZero,

    #[error("no tree subsample avoids delete group {group}")]
    NoCleanTrees { group: usize },

    #[error("fit was built without a standard-error subsample plan")]
    MissingPlan,

    #[error("kernel denominator is zero: no covariate mass near the query point")]
    ZeroDenominator,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
