use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain invariant was violated by user-supplied data.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// Malformed text input, with a 1-based line number when known.
    #[error("{}parse error{}: {message}", source_prefix(.path), line_suffix(*.line))]
    Parse {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("{0}")]
    Singular(String),

    #[error(
        "not enough samples: {available} available, more than {required} required ({context})"
    )]
    SampleDeficit {
        available: usize,
        required: usize,
        context: String,
    },

    #[error(
        "{solver} did not converge after {iterations} iterations \
         (last relative decrease {last_relative_change:.3e})"
    )]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        last_relative_change: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn source_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

fn line_suffix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dimension(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn parse(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Attach a file path to a parse error that lacks one.
    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse {
                path: None,
                line,
                message,
            } => Error::Parse {
                path: Some(path.into()),
                line,
                message,
            },
            other => other,
        }
    }

    /// True for errors caused by bad input (as opposed to numerical trouble).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. }
                | Error::Parse { .. }
                | Error::Dimension { .. }
                | Error::SampleDeficit { .. }
                | Error::Io { .. }
        )
    }
}
