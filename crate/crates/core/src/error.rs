use std::fmt;
use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("rank-deficient system ({context}): smallest |R_ii| = {min_diag:.3e} <= tolerance {tolerance:.3e}")]
    RankDeficient {
        context: String,
        min_diag: f64,
        tolerance: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no finite horizon: eta_hat = {eta_hat} >= 1 and target {target:e} is below c_hat*eta_hat = {first:e}")]
    NoFiniteHorizon { eta_hat: f64, target: f64, first: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad problem file: {0}")]
    Format(String),

    #[error("{coord}: {source}")]
    Trial {
        coord: TrialCoord,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position inside a Monte Carlo sweep, attached to errors raised by inner solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialCoord {
    SketchSize { m: usize, trial: usize },
    Iteration { iteration: usize, trial: usize },
}

impl fmt::Display for TrialCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrialCoord::SketchSize { m, trial } => write!(f, "m={m}, trial={trial}"),
            TrialCoord::Iteration { iteration, trial } => {
                write!(f, "iteration={iteration}, trial={trial}")
            }
        }
    }
}

impl Error {
    pub(crate) fn at(self, coord: TrialCoord) -> Error {
        Error::Trial {
            coord,
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
