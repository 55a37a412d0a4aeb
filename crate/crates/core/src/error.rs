use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called outside its mathematical domain (shape mismatch,
    /// empty input, invalid class index, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("loss function is not deterministic: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("parse error in {source_name} at byte {offset}: {message}")]
    Parse {
        source_name: String,
        offset: u64,
        message: String,
    },

    #[error("{source_name}:{line}: {message}")]
    Manifest {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown configuration key `{key}` (valid keys: {valid})")]
    UnknownKey { key: String, valid: String },

    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },

    #[error("training diverged at iteration {iteration}: loss = {loss} (last good epoch: {last_good_epoch:?})")]
    Diverged {
        iteration: u64,
        loss: f64,
        last_good_epoch: Option<usize>,
    },

    #[error("stream session is poisoned by an earlier error")]
    Poisoned,

    #[error("no class has a defined average precision")]
    NoValidClass,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NonFinite { .. } => "non_finite",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::NonDeterministic { .. } => "non_deterministic",
            Error::Parse { .. } => "parse",
            Error::Manifest { .. } => "manifest",
            Error::UnknownKey { .. } => "unknown_key",
            Error::InvalidValue { .. } => "invalid_value",
            Error::Diverged { .. } => "diverged",
            Error::Poisoned => "poisoned",
            Error::NoValidClass => "no_valid_class",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
