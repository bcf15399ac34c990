//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the numerical routines.
///
/// `NotPositiveDefinite` and `Asymmetric` come out of the dense linear
/// algebra; `BlowUp` out of time integration; the rest are argument
/// validation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A Cholesky pivot or an eigenvalue was not strictly positive. `index`
    /// is the pivot column (factorization) or the eigenvalue rank
    /// (eigendecomposition paths).
    #[error("matrix is not positive definite (pivot/eigenvalue {index} <= 0)")]
    NotPositiveDefinite { index: usize },

    /// Input claimed to be symmetric deviates from its transpose by more
    /// than the allowed relative tolerance.
    #[error("matrix is asymmetric: relative asymmetry {asymmetry:.3e} exceeds {limit:.3e}")]
    Asymmetric { asymmetry: f64, limit: f64 },

    /// A vector or matrix had the wrong size for the operation.
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A state component became non-finite during integration. The run is
    /// aborted; `step` is the index of the offending step (1-based count of
    /// steps taken) and `t` the time it would have reached.
    #[error("non-finite state at step {step} (t = {t:.6})")]
    BlowUp { step: usize, t: f64 },

    /// Two states that should be time-aligned differ by more than the
    /// comparison tolerance.
    #[error("states at mismatched times {t_a} vs {t_b} (tolerance {tol})")]
    TimeMismatch { t_a: f64, t_b: f64, tol: f64 },

    /// Input outside the domain of the operation (empty grids, non-positive
    /// errors on a log fit, non-finite values, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A requested time window leaves the stored trajectory.
    #[error("window [{s}, {t}] outside stored trajectory [0, {t_end}]")]
    OutOfRange { s: f64, t: f64, t_end: f64 },

    /// Rejected run configuration (non-positive step size, stability bound
    /// violation, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
