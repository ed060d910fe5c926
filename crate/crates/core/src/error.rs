use alloc::string::String;
use core::fmt;

/// Everything that can go wrong inside the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its documented range.
    InvalidParameter(String),
    /// Two objects that must live on the same mesh do not.
    ShapeMismatch(String),
    /// Cubes handed to a grid operation do not belong to that grid.
    GridMismatch(String),
    /// A weighted average was requested over a cube whose weight integrates to zero.
    DegenerateWeight {
        /// Which parameter (1 or 2) the offending cube lives in.
        axis: u8,
        scale: u32,
        /// Flattened cube index at that scale.
        cube: usize,
    },
    /// Same as [`Error::DegenerateWeight`] for an average over a whole rectangle.
    DegenerateRectangle { scales: [u32; 2], cubes: [usize; 2] },
    /// Input data contained NaN or an infinity.
    NonFinite(String),
    /// The atomic decomposition only accepts functions with vanishing boundary terms.
    NotMeanZero { residual: f64 },
    /// Random weight generation did not certify within the allotted rounds.
    GenerationFailed { rounds: u32 },
    /// An iterative routine produced a non-finite intermediate.
    NumericFailure(String),
    /// The requested computation exceeds the configured size guard.
    TooLarge(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            Error::GridMismatch(m) => write!(f, "grid mismatch: {m}"),
            Error::DegenerateWeight { axis, scale, cube } => write!(
                f,
                "degenerate weight: the weight integrates to zero on cube {cube} at scale {scale} of axis {axis}"
            ),
            Error::DegenerateRectangle { scales, cubes } => write!(
                f,
                "degenerate weight: the weight integrates to zero on the rectangle (cube {} at scale {}) × (cube {} at scale {})",
                cubes[0], scales[0], cubes[1], scales[1]
            ),
            Error::NonFinite(m) => write!(f, "non-finite value in {m}"),
            Error::NotMeanZero { residual } => write!(
                f,
                "input has non-vanishing boundary terms (residual {residual:e}); project it first"
            ),
            Error::GenerationFailed { rounds } => {
                write!(f, "could not certify a random accretive weight after {rounds} rounds")
            }
            Error::NumericFailure(m) => write!(f, "numeric failure: {m}"),
            Error::TooLarge(m) => write!(f, "computation too large: {m}"),
        }
    }
}

impl core::error::Error for Error {}
