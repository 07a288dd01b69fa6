use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unknown sample point: {0}")]
    UnknownPoint(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid density operator: {0}")]
    InvalidDensity(String),

    #[error("kernel order violated: {0}")]
    OrderViolated(String),

    #[error("range of the K Gram is not contained in the range of the L Gram (residual {residual:e} > {threshold:e})")]
    RangeIncompatible { residual: f64, threshold: f64 },

    #[error("map is not completely positive (min Choi eigenvalue {min_eigenvalue:e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error("factor systems do not reconstruct the same Gram (mismatch {mismatch:e})")]
    GramMismatch { mismatch: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Machine-readable reason code.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } => "not_square",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Empty(_) => "empty_input",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::UnknownPoint(_) => "unknown_point",
            Error::NotPsd { .. } => "not_psd",
            Error::InvalidDensity(_) => "invalid_density",
            Error::OrderViolated(_) => "order_violated",
            Error::RangeIncompatible { .. } => "range_incompatible",
            Error::NotCompletelyPositive { .. } => "not_completely_positive",
            Error::GramMismatch { .. } => "gram_mismatch",
            Error::Numerical(_) => "numerical_failure",
        }
    }

    /// True when the inputs were well-formed but violate a mathematical
    /// precondition (order, positivity, complete positivity).
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::NotPsd { .. }
                | Error::InvalidDensity(_)
                | Error::OrderViolated(_)
                | Error::RangeIncompatible { .. }
                | Error::NotCompletelyPositive { .. }
                | Error::GramMismatch { .. }
        )
    }
}
