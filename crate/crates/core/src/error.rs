use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Which axis of a raster an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

impl core::fmt::Display for Axis {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Axis::Rows => f.write_str("height"),
            Axis::Cols => f.write_str("width"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{axis} {len} is not divisible by factor {factor}")]
    NotDivisible { axis: Axis, len: usize, factor: usize },
    #[error("class index {value} out of range for {num_classes} classes")]
    ClassOutOfRange { value: u8, num_classes: usize },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("palette has {palette} classes but raster uses {raster}")]
    PaletteMismatch { palette: usize, raster: usize },
    #[error("window extraction infeasible: {rejections} consecutive rejections")]
    Infeasible { rejections: usize },
    #[error("batch norm evaluated before running statistics were initialized")]
    UninitializedRunningStats,
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("divergence rate {rate:.3} exceeds limit after tuning (chain {chain})")]
    TooManyDivergences { chain: usize, rate: f64 },
    #[error("graph error: {0}")]
    Graph(String),
    #[error("sampler failed on image {image}: {source}")]
    SamplerFailed {
        image: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
