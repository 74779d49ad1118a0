use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Carries the best iterate found so callers can inspect or fall back.
    #[error("projection did not converge after {sweeps} sweeps (KKT residual {residual:.3e})")]
    ProjectionNotConverged {
        sweeps: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("singular Gram matrix with lambda = 0; use a positive ridge lambda")]
    SingularGram,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::ProjectionNotConverged { .. } | Error::Numerical(_) | Error::SingularGram => {
                true
            }
            Error::Round { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
