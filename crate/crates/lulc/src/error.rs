use std::path::PathBuf;

/// Malformed or unsupported file contents.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported {format} version {found} (expected {expected})")]
    BadVersion { format: &'static str, expected: u8, found: u8 },
    #[error("truncated {what}: need {needed} bytes, have {available}")]
    Truncated { what: &'static str, needed: usize, available: usize },
    #[error("class index {value} at pixel {pixel} out of range for {classes} classes")]
    ClassOutOfRange { value: u8, classes: usize, pixel: usize },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
}

impl FormatError {
    pub(crate) fn malformed(what: &'static str, detail: impl Into<String>) -> Self {
        FormatError::Malformed { what, detail: detail.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] lulc_core::Error),
    #[error("{path}: {source}")]
    InFile { path: PathBuf, source: Box<Error> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// 1 for usage errors, 2 for data and format errors, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Core(e) => core_exit_code(e),
            Error::InFile { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

fn core_exit_code(e: &lulc_core::Error) -> i32 {
    use lulc_core::Error as E;
    match e {
        E::BadTemperature(_) => 1,
        E::NonFinite(_) | E::Singular(_) | E::TooManyDivergences { .. } | E::UninitializedRunningStats => 3,
        E::SamplerFailed { source, .. } => core_exit_code(source),
        _ => 2,
    }
}
