use thiserror::Error;

/// Errors raised by operator construction, propagation and configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid angular momentum: {0}")]
    Domain(String),

    #[error("state with j = {j} does not fit in a basis truncated at j_max = {j_max}")]
    Truncation { j: u32, j_max: u32 },

    #[error("manifold mismatch: {0}")]
    Manifold(String),

    #[error("`{path}`: {message}")]
    Config { path: String, message: String },

    #[error(
        "population near the truncation edge reached {leakage:.3e} at t = {t} \
         (threshold {threshold:.1e}); increase j_max"
    )]
    Leakage { t: f64, leakage: f64, threshold: f64 },

    #[error("trace drifted by {drift:.3e} at t = {t}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("density matrix lost positivity at t = {t}: smallest eigenvalue {min_eigenvalue:.3e}")]
    Positivity { t: f64, min_eigenvalue: f64 },

    #[error("jump requested at t = {t} but every jump channel has zero weight")]
    ImpossibleJump { t: f64 },

    #[error("adaptive step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("ensemble records were sampled on different time grids")]
    GridMismatch,

    #[error("vibrational ladder truncated at nu_max = {nu_max} is too small: {reason}")]
    VibTruncation { nu_max: usize, reason: String },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// True for failures that arise while integrating (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Leakage { .. }
                | Error::TraceDrift { .. }
                | Error::Positivity { .. }
                | Error::ImpossibleJump { .. }
                | Error::StepUnderflow { .. }
                | Error::VibTruncation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
