use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] equant_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use equant_core::Error as C;
        match self {
            Error::Core(c) => match c {
                C::Shape { .. } => "shape",
                C::DegenerateSlice { .. } => "degenerate_slice",
                C::Config(_) => "config",
                C::Contract(_) => "contract",
                C::Lookup { .. } => "lookup",
                C::Alignment { .. } => "alignment",
                C::UnknownParam(_) => "unknown_param",
                C::Restore { .. } => "restore",
                C::NonFiniteLoss { .. } => "non_finite_loss",
            },
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
        }
    }
}
