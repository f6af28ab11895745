use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, sampling, fitting, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A domain type invariant was violated at construction time.
    #[error("invalid {what}: {why}")]
    InvalidInput { what: &'static str, why: String },

    /// A Monte Carlo truncation radius whose analytic tail bound exceeds
    /// the requested bias budget.
    #[error(
        "truncation radius {r_max:.3e} m too small: tail bound {tail_frac:.3e} \
         of gamma-tilde exceeds the allowed {allowed:.3e}"
    )]
    TruncationRadius {
        r_max: f64,
        tail_frac: f64,
        allowed: f64,
    },

    /// Background normalization could not proceed (too few points outside
    /// the dip window, or the stretched-exponential fit failed).
    #[error("background normalization failed: {0}")]
    Background(String),

    /// The contrast dip is too shallow relative to the noise floor to
    /// support a depth estimate.
    #[error(
        "insufficient signal: model dip amplitude {dip:.3e} is below \
         2x the median noise {noise:.3e}"
    )]
    InsufficientSignal { dip: f64, noise: f64 },

    /// Nonlinear least squares did not converge from any start point.
    #[error("fit did not converge: {0}")]
    FitNonConvergence(String),

    /// A required field could not be resolved from the inputs provided.
    #[error("unresolved input: {0}")]
    Unresolved(String),

    /// Configuration file rejected (schema violation, unknown key, bad units).
    #[error("config error in {path}: {msg}")]
    Config { path: PathBuf, msg: String },

    /// A data file failed to parse; carries file and line for diagnostics.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::InvalidInput {
            what,
            why: why.into(),
        }
    }
}
