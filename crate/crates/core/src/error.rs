use thiserror::Error;

/// Errors raised by the numerical core. Every variant names the operation
/// that failed so that CLI diagnostics can point at the module involved.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: singular input (condition number {cond:.3e} exceeds {limit:.1e})")]
    SingularInput {
        op: &'static str,
        cond: f64,
        limit: f64,
    },

    #[error("{op}: matrix is not positive definite")]
    NotPositiveDefinite { op: &'static str },

    #[error("{op}: requested {requested} null-space vectors but only {available} exist")]
    RankDeficiency {
        op: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("{op}: invalid dimension: {detail}")]
    InvalidDimension { op: &'static str, detail: String },

    #[error("{op}: degenerate input: {detail}")]
    DegenerateInput { op: &'static str, detail: String },

    #[error("{op}: non-finite entry in input")]
    NonFinite { op: &'static str },

    #[error("{op}: inter-relay interference not cancelled (residual {residual:.3e})")]
    InterferenceNotCancelled { op: &'static str, residual: f64 },

    #[error("{op}: channel pair violates inter-relay reciprocity (deviation {deviation:.3e})")]
    ReciprocityViolation { op: &'static str, deviation: f64 },

    #[error("{op}: {failed} of {trials} trials failed, above the resample cap of {cap}")]
    ResampleCapExceeded {
        op: &'static str,
        failed: usize,
        trials: usize,
        cap: usize,
    },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidDimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn degenerate(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DegenerateInput {
            op,
            detail: detail.into(),
        }
    }

    /// True for failures caused by the numerical conditioning of a random
    /// draw rather than by a programming or configuration error.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularInput { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::RankDeficiency { .. }
                | Error::DegenerateInput { .. }
                | Error::NonFinite { .. }
        )
    }
}
