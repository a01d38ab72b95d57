use thiserror::Error;

/// Errors raised by model evaluation, integration and the sensitivity solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SddeError {
    #[error("domain error at t = {t}: {what}")]
    Domain { t: f64, what: String },

    #[error("non-finite value at t = {t}: {what}")]
    Numeric { t: f64, what: String },

    #[error("delay {tau} at t = {t} is below the admissible minimum {tau_min}")]
    VanishingDelay { t: f64, tau: f64, tau_min: f64 },

    #[error("solution blew up; last good time t = {last_good}")]
    Blowup { last_good: f64 },

    #[error("fixed-point iteration on step [{t0}, {t1}] did not converge in {iterations} iterations")]
    Step { t0: f64, t1: f64, iterations: usize },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("singular normal equations (Jacobian singular values {singular_values:?})")]
    Rank { singular_values: Vec<f64> },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T, E = SddeError> = std::result::Result<T, E>;
