use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape, length, range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("incompatible architecture: expected hash {expected}, found {found}")]
    IncompatibleArchitecture { expected: String, found: String },

    /// A file did not match its schema. `path` names the offending field.
    #[error("format error at `{path}`: {msg}")]
    Format { path: String, msg: String },

    /// Optimization produced a NaN/Inf loss. `recent` holds the last few
    /// (target, replay) loss pairs leading up to the failure.
    #[error("non-finite loss at iteration {iteration} ({stage}); recent losses: {recent:?}")]
    NonFinite {
        iteration: usize,
        stage: &'static str,
        recent: Vec<(f64, f64)>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn format_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.into(),
        msg: msg.into(),
    }
}
