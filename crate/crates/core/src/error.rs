use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("tie in row {row}: value {value} appears more than once")]
    TieDetected { row: usize, value: f64 },

    #[error("row {row}: tie persisted after {retries} redraws")]
    TieRetryExhausted { row: usize, retries: usize },

    #[error("exact conditional expectations need a known marginal CDF")]
    NoClosedFormCdf,

    #[error("kernel `{name}` is not antisymmetric: phi(x,y) + phi(y,x) = {residual:e} at ({x}, {y})")]
    KernelNotAntisymmetric {
        name: String,
        x: f64,
        y: f64,
        residual: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigensolver failed to converge")]
    NoConvergence,

    #[error("singular matrix during factorization")]
    SingularFactorization,

    #[error("z = {re} + {im}i is too close to the real axis")]
    NearRealAxis { re: f64, im: f64 },

    #[error("z = {re} + {im}i lies on the support of the law")]
    OnSupport { re: f64, im: f64 },

    #[error("moment order {0} outside 1..=4")]
    MomentOrder(u32),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence | Error::SingularFactorization | Error::TieRetryExhausted { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
