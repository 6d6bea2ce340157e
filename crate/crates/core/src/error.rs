use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented precondition or invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("time step {requested:.6e} s exceeds the admissible step {admissible:.6e} s")]
    Cfl { requested: f64, admissible: f64 },

    #[error("non-finite concentration in cell ({i}, {j}, {k}) at t = {time} s")]
    NonFinite {
        i: usize,
        j: usize,
        k: usize,
        time: f64,
    },

    /// Gram matrix could not be factorized even at the largest jitter.
    #[error("GP fit failed: {0}")]
    Fit(String),

    #[error("no bracketing interval found: {0}")]
    NoBracket(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = configuration, 3 = numerical failure, 4 = contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Toml(_) | Error::Csv(_) | Error::Json(_) => {
                2
            }
            Error::Cfl { .. }
            | Error::NonFinite { .. }
            | Error::Fit(_)
            | Error::NoBracket(_)
            | Error::Numerical(_) => 3,
            Error::Invalid(_) => 4,
        }
    }

    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "contract_violation",
            Error::Cfl { .. } => "cfl",
            Error::NonFinite { .. } => "non_finite",
            Error::Fit(_) => "fit_failure",
            Error::NoBracket(_) => "no_bracket",
            Error::Numerical(_) => "numerical",
            Error::Config(_) | Error::Toml(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
