use thiserror::Error;

/// Errors raised by the analysis routines.
///
/// Numerical failures (bracketing, convergence) are kept distinct from
/// precondition violations so front ends can map them to different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix does not have integer eigenvalues 1 and m with |m| > 1: {0}")]
    NotEM(String),
    #[error("zero vector has no lattice constant")]
    ZeroVector,
    #[error("vector ({0}, {1}) is not primitive")]
    NotPrimitive(i64, i64),
    #[error("singular integer matrix (determinant 0)")]
    SingularMatrix,
    #[error("tolerance {tol:e} needs more than {cap} series terms")]
    TolNotAchievable { tol: f64, cap: usize },
    #[error("semi-conjugacy does not straddle theta = {theta} along the search line")]
    BracketFailure { theta: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("points do not form a periodic orbit (residual {residual:e})")]
    NotPeriodic { residual: f64 },
    #[error("orbit is not a saddle")]
    NotSaddle,
    #[error("orbit is not a repeller")]
    NotRepeller,
    #[error("empty point set")]
    EmptySet,
    #[error("vertical circle x = {base_x} is not invariant under the {n}-th iterate")]
    NotInvariantCircle { base_x: f64, n: usize },
    #[error("map is not a skew product (x' must depend on x only and y' = a x + y + g)")]
    NotSkewForm,
    #[error("Jacobian is singular at step {step} (|det| = {det:e})")]
    SingularJacobian { step: usize, det: f64 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for precondition violations, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotEM(_)
                | Error::ZeroVector
                | Error::NotPrimitive(..)
                | Error::SingularMatrix
                | Error::NotInvariantCircle { .. }
                | Error::NotSkewForm
                | Error::Parse { .. }
                | Error::InvalidParameter(_)
        )
    }
}
