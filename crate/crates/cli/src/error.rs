use std::fmt;

use texvib_core::CoreError;
use texvib_nn::NnError;

/// A runtime failure, reported as one `error[category]: detail` line.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub detail: String,
}

impl CliError {
    pub fn new(category: &'static str, detail: impl Into<String>) -> Self {
        Self {
            category,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Self::new("config", detail)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let detail = self.detail.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {detail}", self.category)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CoreError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
