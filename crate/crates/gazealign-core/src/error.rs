use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CoreError>;

/// Errors produced by grid, loss, metric, and training operations.
#[derive(Clone, Debug, PartialEq)]
pub enum CoreError {
    /// A grid constructor received a zero dimension.
    EmptyDims,
    /// Backing storage length does not match the declared shape.
    LengthMismatch { expected: usize, got: usize },
    /// Two grids that must share a shape do not.
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A value that must be finite is NaN or infinite.
    NonFinite(&'static str),
    /// A scalar parameter is outside its valid range.
    BadParam {
        name: &'static str,
        value: f64,
    },
    /// Map values fall outside the range an operation requires.
    ValueOutOfRange(&'static str),
    /// Pearson correlation is undefined for a constant map.
    ConstantInput,
    /// A map that must be a probability distribution is not.
    NotADistribution(&'static str),
    /// Requested layer count exceeds the tensor's layer axis.
    LayerOutOfRange { m_layers: usize, layers: usize },
    /// Training produced a non-finite loss.
    Diverged { epoch: usize },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::EmptyDims => write!(f, "grid dimensions must be at least 1x1"),
            CoreError::LengthMismatch { expected, got } => {
                write!(f, "storage length {got} does not match shape ({expected} expected)")
            }
            CoreError::DimMismatch { left, right } => write!(
                f,
                "dimension mismatch: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            CoreError::BadParam { name, value } => {
                write!(f, "parameter {name} out of range (got {value})")
            }
            CoreError::ValueOutOfRange(what) => write!(f, "values out of range: {what}"),
            CoreError::ConstantInput => {
                write!(f, "correlation undefined for a constant map")
            }
            CoreError::NotADistribution(what) => {
                write!(f, "map is not a probability distribution: {what}")
            }
            CoreError::LayerOutOfRange { m_layers, layers } => {
                write!(f, "m_layers={m_layers} outside 1..={layers}")
            }
            CoreError::Diverged { epoch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}")
            }
        }
    }
}
