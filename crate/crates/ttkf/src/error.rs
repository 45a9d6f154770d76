use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range on mode {mode}: dimension is {dim}")]
    IndexOutOfRange { mode: usize, index: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("tensor order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("column count mismatch: {left} vs {right}")]
    ColumnMismatch { left: usize, right: usize },

    #[error("batch size mismatch: {left} vs {right}")]
    BatchMismatch { left: usize, right: usize },

    #[error("dense size guard exceeded: {size} entries > {guard}")]
    SizeGuard { size: usize, guard: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nonpositive variance {value} at batch slice {index}")]
    NonpositiveVariance { index: usize, value: f64 },

    #[error("innovation variance {value} at batch slice {index} below floor {floor}")]
    VarianceUnderflow { index: usize, value: f64, floor: f64 },

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim_mismatch(msg: impl Into<String>) -> Self {
        Error::DimMismatch(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
