use thiserror::Error;

use crate::energy::Configuration;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the sampled potential domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("no root of R V'(R) = 2 in [{lo:e}, {hi:e}]")]
    NoSupport { lo: f64, hi: f64 },

    #[error("{solver} did not converge after {iterations} iterations (last change {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("coincidence set touches the boundary of the computational domain; enlarge it")]
    DomainTooSmall,

    #[error("points {i} and {j} coincide")]
    SingularConfiguration { i: usize, j: usize },

    #[error("line search stagnated at w_n = {energy} (max |grad| = {grad_inf:e})")]
    Stagnation {
        best: Box<Configuration>,
        energy: f64,
        grad_inf: f64,
    },

    #[error("eigensolver failed after {iterations} iterations")]
    Eigensolver { iterations: usize },

    #[error("series of length {len} is too short (need at least {min})")]
    SeriesTooShort { len: usize, min: usize },

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },

    #[error("point is singular for this evaluation: {0}")]
    Singularity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(key: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key,
            reason: reason.into(),
        }
    }
}
