use std::io;

/// Errors produced by graph construction, analysis and simulation.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// An argument or input violates a documented precondition.
    #[error("{0}")]
    Domain(String),

    /// A computation would exceed a configured resource cap.
    #[error("{what}: {requested} exceeds the cap of {cap}{hint}")]
    Size {
        what: &'static str,
        requested: u128,
        cap: u128,
        hint: &'static str,
    },

    /// The exact engine cannot represent this structure.
    #[error("unsupported structure: {0}")]
    Unsupported(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("stationary solve did not converge: residual {residual:e} after {iterations} sweeps")]
    Numeric { residual: f64, iterations: usize },

    /// A coupled construction broke one of its own invariants.
    #[error("coupling integrity: {0}")]
    CouplingIntegrity(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit status conventionally associated with this error:
    /// 2 for validation, 3 for invariant breaches, 4 for resource caps.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Unsupported(_) | Error::Json(_) => 2,
            Error::CouplingIntegrity(_) | Error::Numeric { .. } => 3,
            Error::Size { .. } => 4,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
