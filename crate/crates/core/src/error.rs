//! Crate-wide error type with a stable exit-code taxonomy.
//!
//! Variants are grouped by how a caller should react: input problems (exit 2),
//! numerical failures (exit 3), violated solution identities (exit 4), and
//! storage problems (exit 5).

/// Errors produced by every module of this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inconsistent or malformed input data.
    #[error("validation: {0}")]
    Validation(String),

    /// An operation was called in the wrong parameter mode.
    #[error("mode: {0}")]
    Mode(String),

    /// The divisor lacks the stability required by the operation.
    #[error("stability: {0}")]
    Stability(String),

    /// Configuration value outside the supported range.
    #[error("configuration: {0}")]
    Config(String),

    /// Volume target at or below the admissible lower bound.
    #[error("admissibility: {0}")]
    Admissibility(String),

    /// Newton or continuation failure.
    #[error("solver: {0}")]
    Solver(String),

    /// Newton ran out of iterations; carries the state of the last iterate.
    #[error("solver: no convergence at lambda {lambda:.6e} after {iterations} iterations, residual {residual:.3e}")]
    NonConvergence {
        lambda: f64,
        iterations: usize,
        residual: f64,
    },

    /// Continuation stalled between two parameter values; the step
    /// amplification is the sup-norm ratio |dv|/|F| of the last good solve,
    /// a conditioning proxy that blows up at a fold.
    #[error("solver: fold detected between lambda {last_good:.6e} (converged) and {failed:.6e} (unreachable at substep depth {depth}); step amplification {amplification:.3e}")]
    Fold {
        last_good: f64,
        failed: f64,
        depth: usize,
        amplification: f64,
    },

    /// Sparse factorization or triangular solve failure.
    #[error("linear algebra: {0}")]
    LinearAlgebra(String),

    /// Shooting bracket or boundary-slope failure.
    #[error("shooting: {0}")]
    Shooting(String),

    /// An ODE trajectory violated a guaranteed bound.
    #[error("integration: {0}")]
    Integration(String),

    /// A computed path failed the monotonicity or comparison certificates.
    #[error("branch identity: {0}")]
    BranchIdentity(String),

    /// A family limit that must be monotone was not.
    #[error("limit check: {0}")]
    LimitCheck(String),

    /// A definitional identity failed beyond its tolerance.
    #[error("consistency: {0}")]
    Consistency(String),

    /// Geodesic sample graph is unusable (for example disconnected).
    #[error("sampling: {0}")]
    Sampling(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// Unreadable or version-mismatched file content.
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 solver, 4 identity, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Mode(_)
            | Error::Stability(_)
            | Error::Config(_)
            | Error::Admissibility(_) => 2,
            Error::Solver(_)
            | Error::NonConvergence { .. }
            | Error::Fold { .. }
            | Error::LinearAlgebra(_)
            | Error::Shooting(_)
            | Error::Integration(_) => 3,
            Error::BranchIdentity(_)
            | Error::LimitCheck(_)
            | Error::Consistency(_)
            | Error::Sampling(_) => 4,
            Error::Io(_) | Error::Format(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
