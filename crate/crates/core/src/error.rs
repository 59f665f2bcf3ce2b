use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite entry in {what} at index ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),

    #[error("SVD did not converge")]
    SvdNoConvergence,

    /// The test vector has no component orthogonal to the training row space.
    #[error("test vector lies in the training row space (no orthogonal component)")]
    DegenerateDirection,

    /// Appending a label that the row space cannot reproduce forces an infinite norm.
    #[error("minimum-norm solution is unbounded: residual {residual} with zero orthogonal component")]
    UnboundedNorm { residual: f64 },

    #[error("regularization bracket expansion failed, final norm gap {norm_gap}")]
    BracketFailure { norm_gap: f64 },

    #[error("normalization integral did not converge after {widenings} widenings (last relative change {relative_change})")]
    QuadratureFailure { widenings: u32, relative_change: f64 },
}
