use std::fmt;
use std::io;
use std::path::PathBuf;

/// A single schema or invariant violation, located as precisely as the
/// input allows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub scene: Option<u64>,
    pub frame: Option<u64>,
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            scene: None,
            frame: None,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn in_scene(mut self, scene: u64) -> Self {
        self.scene = Some(scene);
        self
    }

    pub fn in_frame(mut self, frame: u64) -> Self {
        self.frame = Some(frame);
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(scene) = self.scene {
            write!(f, "scene {scene}: ")?;
        }
        if let Some(frame) = self.frame {
            write!(f, "frame {frame}: ")?;
        }
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: JSON parse error at byte {offset} (line {line}, column {column}): {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("unsupported image format in {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Builds a parse error from a serde_json failure, converting its
    /// line/column position into a byte offset within `text`.
    pub fn json(path: impl Into<PathBuf>, text: &str, err: &serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        Error::Parse {
            path: path.into(),
            offset: byte_offset(text, line, column),
            line,
            column,
            message: err.to_string(),
        }
    }
}

/// serde_json reports 1-based lines and 1-based columns (0 when the error
/// precedes the first character of a line).
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
