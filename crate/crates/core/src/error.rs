use alloc::string::String;

/// Errors raised by the solvers and model constructors.
///
/// Mathematical verdicts (an unsolvable Riccati recursion, a diverging value
/// iteration, an unstable closed loop) are reported as data on the result
/// types, not through this enum.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix `{name}` has shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    DimensionMismatch {
        name: &'static str,
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("matrix `{0}` is not square")]
    NotSquare(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in `{quantity}` at step {step}")]
    NonFinite { quantity: &'static str, step: usize },
    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("riccati recursion is not solvable (failed at step {step})")]
    Unsolvable { step: usize },
    #[error("eigenvalue iteration did not converge for `{0}`")]
    EigenFailure(&'static str),
    #[error("expected a {expected} horizon")]
    WrongHorizon { expected: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;
