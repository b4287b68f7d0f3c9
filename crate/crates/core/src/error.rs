use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unphysical equation of state: {0}")]
    Unphysical(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("singularity reached; last valid eta = {last_eta}")]
    SingularityReached { last_eta: f64 },

    #[error("step size underflow at eta = {eta} while integrating shell |k|^2 = {shell}")]
    Stiffness { eta: f64, shell: i64 },

    #[error("eta = {eta} outside the tabulated range [{min}, {max}]")]
    OutOfRange { eta: f64, min: f64, max: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("ill-conditioned fit (condition number {cond:.3e}); try a smaller window")]
    IllConditioned { cond: f64 },

    #[error("fit window starts too early: {0}")]
    WindowTooEarly(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("time variable undefined: {0}")]
    UndefinedTime(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Json(_) | Error::Format(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
