use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("design matrix is rank deficient (Gram eigenvalue ratio {ratio:e} below 1e-10)")]
    RankDeficient { ratio: f64 },

    #[error("insufficient data: {effective} usable rows for {columns} regressors (need at least {needed})")]
    InsufficientData {
        effective: usize,
        columns: usize,
        needed: usize,
    },

    #[error("lag order {p} needs {p} initial values or at least {needed} rows, got {rows}")]
    MissingInitialValues {
        p: usize,
        rows: usize,
        needed: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training residuals are degenerate (gamma_0 = {gamma0:e}); monitoring impossible")]
    DegenerateResiduals { gamma0: f64 },

    #[error("monitor already finished; re-train before monitoring again")]
    MonitorFinished,

    #[error("eta = 1/2 is not supported (neither the light-weight nor the Renyi limit applies)")]
    UnsupportedEta,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Numerical failures (as opposed to bad input or bad configuration).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::DegenerateResiduals { .. }
        )
    }

    /// Errors caused by the user's configuration rather than by data.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnsupportedEta | Error::InvalidConfig(_) | Error::Domain(_)
        )
    }
}
