use thiserror::Error;

/// Errors produced anywhere in the integrator stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A saddle-point (KKT) matrix could not be factored: rank-deficient
    /// coupling block, or a top block that is degenerate on the kernel of
    /// the coupling.
    #[error("singular saddle-point system: {reason}")]
    SingularSystem { reason: String },

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    /// An iterative solve ran out of iterations or diverged.
    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A computed subspace had the wrong dimension.
    #[error("rank loss in {context}: expected dimension {expected}, found {found}")]
    RankLoss {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("symmetry generator is not tangent to the constraint (|Dg·ξq| = {violation:.3e})")]
    GeneratorNotTangent { violation: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn singular(reason: impl Into<String>) -> Self {
        Error::SingularSystem {
            reason: reason.into(),
        }
    }
}
