use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{section}, line {line}: {message}")]
    Parse {
        section: String,
        line: usize,
        message: String,
    },

    #[error("inadmissible word: forbidden edge {from} -> {to}")]
    ForbiddenEdge { from: usize, to: usize },

    #[error("{what} did not converge (residual {residual:.3e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("orbit source incomplete: need n_max >= {required_n_max}, have {available}")]
    IncompleteSource {
        required_n_max: usize,
        available: usize,
    },

    #[error("CLT hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::Singular(_) => 2,
            Error::IncompleteSource { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn parse(section: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            section: section.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
