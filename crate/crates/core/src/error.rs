use thiserror::Error;

use crate::oracle::FixedPointResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row (s={state}, a={action}) sums to {sum}, expected 1")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("negative transition probability {value} at (s={state}, a={action}, s'={next})")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("non-finite {what} at (s={state}, a={action})")]
    NonFinite {
        what: &'static str,
        state: usize,
        action: usize,
    },

    #[error("run {run:?} produced non-finite iterates at iteration {iteration}")]
    Diverged { run: String, iteration: usize },

    #[error("discount factor {0} outside [0, 1)")]
    InvalidDiscount(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid temperature {0}: must be finite and > 0")]
    InvalidTemperature(f64),

    #[error("invalid exponent p = {0}: {1}")]
    InvalidExponent(f64, &'static str),

    #[error("feature matrix is not full column rank (sigma_min / sigma_max = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("normal matrix is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("outside contraction regime: gamma_pw = {gamma_pw} >= 1")]
    OutOfRegime { gamma_pw: f64 },

    #[error(
        "soft value iteration did not converge in {} iterations (last gap {:e})",
        .0.iterations, .0.final_sup_gap
    )]
    FixedPointNotConverged(Box<FixedPointResult>),

    #[error("Lp regression did not converge after {iterations} iterations (scaled gradient {grad_norm:e}){}",
        .outer_iteration.map(|k| format!(" at outer iteration {k}")).unwrap_or_default())]
    InnerSolver {
        iterations: usize,
        grad_norm: f64,
        outer_iteration: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from user input rather than a numerical or I/O failure.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::NonStochasticRow { .. }
                | Error::NegativeProbability { .. }
                | Error::NonFinite { .. }
                | Error::InvalidDiscount(_)
                | Error::Shape(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidWeights(_)
                | Error::InvalidTemperature(_)
                | Error::InvalidExponent(..)
                | Error::RankDeficient { .. }
                | Error::Config(_)
                | Error::Json(_)
        )
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}
