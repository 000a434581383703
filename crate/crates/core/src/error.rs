use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid {what}: {detail}")]
    Config { what: &'static str, detail: String },

    #[error("signal has {len} samples, shorter than one {fft_size}-point window")]
    SignalTooShort { len: usize, fft_size: usize },

    #[error("sample rate {found} Hz does not match the configured {expected} Hz")]
    RateMismatch { expected: u32, found: u32 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("label vector is not on the simplex: {0}")]
    LabelNotSimplex(String),

    #[error("not an SPC1 file")]
    NotSpc1,

    #[error("malformed {format} data: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("class list mismatch: {0}")]
    ClassMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unknown {registry} strategy `{name}`; known: {known}")]
    UnknownStrategy {
        registry: &'static str,
        name: String,
        known: String,
    },

    #[error(transparent)]
    Nn(#[from] texvib_nn::NnError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn config(what: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Config {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn format(format: &'static str, detail: impl Into<String>) -> Self {
        CoreError::Format {
            format,
            detail: detail.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::File {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used for CLI exit lines and HTTP
    /// error bodies.
    pub fn category(&self) -> &'static str {
        match self {
            CoreError::Config { .. } | CoreError::UnknownStrategy { .. } => "config",
            CoreError::SignalTooShort { .. } | CoreError::Dimension(_) => "dimension",
            CoreError::RateMismatch { .. } => "rate_mismatch",
            CoreError::Range(_) => "range",
            CoreError::LabelNotSimplex(_) => "label_not_simplex",
            CoreError::NotSpc1 | CoreError::Format { .. } => "format",
            CoreError::File { .. } | CoreError::Io(_) => "io",
            CoreError::Dataset(_) => "dataset",
            CoreError::ClassMismatch(_) => "class_list_mismatch",
            CoreError::Diverged(_) => "diverged",
            CoreError::Nn(_) => "model",
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
