use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("unsupported grid geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("position ({x:.3}, {y:.3}) is outside the map")]
    OutOfBounds { x: f64, y: f64 },

    #[error("nodata cell encountered near ({x:.3}, {y:.3})")]
    NoData { x: f64, y: f64 },

    #[error("covariance is not symmetric positive definite: {0}")]
    Covariance(String),

    #[error("search window does not intersect the map")]
    EmptyWindow,

    #[error("no candidates available for a position fix")]
    NoFix,

    #[error("numerical failure at iteration {iteration}: {msg}")]
    Numerical { iteration: usize, msg: String },

    #[error("gravimeter sample at t = {time} s lies off the map")]
    OffMapSample { time: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
