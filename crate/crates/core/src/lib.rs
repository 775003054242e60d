//! Variational integrators for holonomically constrained mechanical systems,
//! built from ordinary explicit Runge–Kutta methods.
//!
//! A *standard layer* (any explicit tableau) integrates the unconstrained
//! Euler–Lagrange field together with the action. Its endpoints over a biased
//! window `[hα⁻, hα⁺]`, projected onto the constraint, define boundary maps
//! and a discrete Lagrangian; the *symplectic layer* ([`del_solver::step`])
//! solves the resulting discrete Euler–Lagrange equations. The step inherits
//! the order of the tableau, keeps `(q, v)` on `TQ`, and preserves the discrete
//! symplectic form and the discrete Noether momenta.
//!
//! ```
//! use rk_variational::{problems, step, StepConfig};
//!
//! let pendulum = problems::by_name("sphere-pendulum").unwrap();
//! let config = StepConfig::new(0.05);
//! let (w1, diag) = step(pendulum.spec.as_ref(), &config, &pendulum.default_state).unwrap();
//! assert!(diag.position_violation <= 1e-10);
//! assert_eq!(w1.dim(), 3);
//! ```

pub mod boundary;
pub mod del_solver;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod saddle;
pub mod standard_layer;

pub use boundary::Bias;
pub use del_solver::{simulate, step, ApproximateVariant, FreezePoint, StepConfig, StepDiagnostics, Trajectory};
pub use error::{Error, Result};
pub use geometry::GroupActionSpec;
pub use model::{ProblemSpec, State, TangentVector};
pub use problems::NamedProblem;
pub use standard_layer::{BackwardMode, ButcherTableau, StandardLayer};

// The guide's code samples run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;

    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;

    #[doc = include_str!("../../../book/src/problems.md")]
    pub struct Problems;

    #[doc = include_str!("../../../book/src/standard-layer.md")]
    pub struct StandardLayer;

    #[doc = include_str!("../../../book/src/stepping.md")]
    pub struct Stepping;

    #[doc = include_str!("../../../book/src/geometry.md")]
    pub struct Geometry;

    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
