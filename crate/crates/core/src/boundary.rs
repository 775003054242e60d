//! Boundary maps, discrete Lagrangian, and the projection onto the constraint.
//!
//! For a state `w` and step `h`, the standard layer is run to `t = hα⁻` and
//! `t = hα⁺`. The configuration endpoints are the hatted boundary maps
//! `∂̂∓(w)`, and the action difference is the discrete Lagrangian
//! `L_h(w) = R^S_{hα⁺}(w) − R^S_{hα⁻}(w)`.
//!
//! Off-manifold points are pulled back by the projection `ℙ`, the inverse of
//! the fibration `ι(q, θ) = q + Dg(q)ᵀθ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, ProblemSpec, State};
use crate::saddle::{Orientation, SaddleFactorization, SaddleSystem};
use crate::standard_layer::StandardLayer;

/// Backward and forward fractions `(α⁻, α⁺)` of a step, with `α⁺ − α⁻ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bias {
    alpha_minus: f64,
    alpha_plus: f64,
}

impl Bias {
    pub fn new(alpha_minus: f64, alpha_plus: f64) -> Result<Self> {
        if !(alpha_minus.is_finite() && alpha_plus.is_finite()) {
            return Err(Error::InvalidConfig("bias values must be finite".into()));
        }
        if ((alpha_plus - alpha_minus) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "bias must satisfy alpha_plus - alpha_minus = 1, got ({alpha_minus}, {alpha_plus})"
            )));
        }
        if !(-1.0..=0.0).contains(&alpha_minus) {
            return Err(Error::InvalidConfig(format!(
                "alpha_minus must lie in [-1, 0], got {alpha_minus}"
            )));
        }
        Ok(Self {
            alpha_minus,
            alpha_plus: 1.0 + alpha_minus,
        })
    }

    /// `(−½, ½)`.
    pub fn symmetric() -> Self {
        Self {
            alpha_minus: -0.5,
            alpha_plus: 0.5,
        }
    }

    pub fn alpha_minus(&self) -> f64 {
        self.alpha_minus
    }

    pub fn alpha_plus(&self) -> f64 {
        self.alpha_plus
    }
}

impl Default for Bias {
    /// `(0, 1)`: the backward boundary point is the state itself.
    fn default() -> Self {
        Self {
            alpha_minus: 0.0,
            alpha_plus: 1.0,
        }
    }
}

/// Boundary maps and discrete Lagrangian at one state, with derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub hat_minus: DVector<f64>,
    pub hat_plus: DVector<f64>,
    pub lh: f64,
    /// `D∂̂⁻`, `N×2N` (columns: `δq` then `δv`).
    pub d_hat_minus: DMatrix<f64>,
    pub d_hat_plus: DMatrix<f64>,
    /// `DL_h`, length `2N`.
    pub d_lh: DVector<f64>,
}

impl BoundaryData {
    fn n(&self) -> usize {
        self.hat_minus.len()
    }

    pub fn d_hat_minus_q(&self) -> DMatrix<f64> {
        self.d_hat_minus.columns(0, self.n()).into_owned()
    }

    pub fn d_hat_minus_v(&self) -> DMatrix<f64> {
        self.d_hat_minus.columns(self.n(), self.n()).into_owned()
    }

    pub fn d_hat_plus_q(&self) -> DMatrix<f64> {
        self.d_hat_plus.columns(0, self.n()).into_owned()
    }

    pub fn d_hat_plus_v(&self) -> DMatrix<f64> {
        self.d_hat_plus.columns(self.n(), self.n()).into_owned()
    }

    pub fn d_lh_q(&self) -> DVector<f64> {
        self.d_lh.rows(0, self.n()).into_owned()
    }

    pub fn d_lh_v(&self) -> DVector<f64> {
        self.d_lh.rows(self.n(), self.n()).into_owned()
    }
}

/// Boundary maps and discrete Lagrangian without derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValues {
    pub hat_minus: DVector<f64>,
    pub hat_plus: DVector<f64>,
    pub lh: f64,
}

fn check_step(h: f64) -> Result<()> {
    if !h.is_finite() || h == 0.0 {
        return Err(Error::InvalidConfig(format!("step size must be finite and nonzero, got {h}")));
    }
    Ok(())
}

pub fn boundary_data(
    layer: &StandardLayer,
    spec: &dyn ProblemSpec,
    w: &State,
    h: f64,
    bias: Bias,
) -> Result<BoundaryData> {
    check_step(h)?;
    let minus = layer.flow_jet(spec, w, h * bias.alpha_minus())?;
    let plus = layer.flow_jet(spec, w, h * bias.alpha_plus())?;
    Ok(BoundaryData {
        hat_minus: minus.state.q.clone(),
        hat_plus: plus.state.q.clone(),
        lh: plus.state.s - minus.state.s,
        d_hat_minus: minus.dq(),
        d_hat_plus: plus.dq(),
        d_lh: &plus.action_gradient - &minus.action_gradient,
    })
}

pub fn boundary_values(
    layer: &StandardLayer,
    spec: &dyn ProblemSpec,
    w: &State,
    h: f64,
    bias: Bias,
) -> Result<BoundaryValues> {
    check_step(h)?;
    let minus = layer.flow(spec, w, h * bias.alpha_minus())?;
    let plus = layer.flow(spec, w, h * bias.alpha_plus())?;
    Ok(BoundaryValues {
        hat_minus: minus.q,
        hat_plus: plus.q,
        lh: plus.s - minus.s,
    })
}

/// `ι(q, θ) = q + Dg(q)ᵀθ`.
pub fn iota(spec: &dyn ProblemSpec, q: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    q + spec.d_constraint(q).tr_mul(theta)
}

/// Default tolerance for [`project`] when called internally.
pub const PROJECT_TOL: f64 = 1e-14;
/// Default iteration cap for [`project`] when called internally.
pub const PROJECT_MAX_ITER: usize = 50;

/// `ℙ(q̂) = (q, θ)` with `ι(q, θ) = q̂` and `g(q) = 0`, by Newton's method
/// seeded at `q_guess`.
pub fn project(
    spec: &dyn ProblemSpec,
    q_hat: &DVector<f64>,
    q_guess: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = spec.dim();
    if q_hat.len() != n || q_guess.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q_hat.len().max(q_guess.len()),
            context: "projection input",
        });
    }
    let mut q = q_guess.clone();
    let mut theta = fiber_coordinate(spec, &q, q_hat);
    let scale = q_hat.amax().max(1.0);
    let mut last = f64::INFINITY;
    for _ in 0..=max_iter {
        let r_fiber = iota(spec, &q, &theta) - q_hat;
        let r_con = spec.constraint(&q);
        let res = r_fiber.amax().max(r_con.amax());
        if res <= tol * scale || (res <= 1e2 * tol * scale && res >= last) {
            return Ok((q, theta));
        }
        last = res;
        let fact = projection_factorization(spec, &q, &theta)?;
        let (dq, dtheta) = fact.solve(&-r_fiber, &-r_con)?;
        q += dq;
        theta += dtheta;
    }
    Err(Error::NonConvergence {
        what: "projection onto the constraint",
        iterations: max_iter,
        residual: last,
    })
}

/// [`project`] with the default tolerance and iteration cap.
pub fn project_default(
    spec: &dyn ProblemSpec,
    q_hat: &DVector<f64>,
    q_guess: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    project(spec, q_hat, q_guess, PROJECT_TOL, PROJECT_MAX_ITER)
}

/// Least-squares `θ` with `Dg(q)ᵀθ ≈ q̂ − q`.
pub fn fiber_coordinate(spec: &dyn ProblemSpec, q: &DVector<f64>, q_hat: &DVector<f64>) -> DVector<f64> {
    linalg::least_squares(&spec.d_constraint(q).transpose(), &(q_hat - q))
}

/// Factorization of `[[I + D²(θᵀg)(q), Dg(q)ᵀ], [Dg(q), 0]]`.
pub fn projection_factorization(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<SaddleFactorization> {
    let n = q.len();
    let top = DMatrix::identity(n, n) + model::constraint_hessian(spec, q, theta);
    SaddleSystem::new(top, spec.d_constraint(q), Orientation::Positive)?.factor()
}

/// `λ̂ = λ·Dℙ(ι(q, θ))`, from `[[I + D²(θᵀg), Dgᵀ], [Dg, 0]](λ̂, z) = (λ, 0)`.
///
/// `Dℙ` (the `q`-part) is symmetric, so the same call also applies `Dℙ` to a vector.
pub fn dproject_transpose(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DVector<f64>> {
    let fact = projection_factorization(spec, q, theta)?;
    let d = spec.n_constraints();
    Ok(fact.solve(lambda, &DVector::zeros(d))?.0)
}

/// Apply `Dℙ` at `(q, θ)` to every column of `m`.
pub fn dproject_columns(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    theta: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let fact = projection_factorization(spec, q, theta)?;
    let d = spec.n_constraints();
    Ok(fact.solve_many(m, &DMatrix::zeros(d, m.ncols()))?.0)
}

/// Closest velocity to `v` satisfying `Dg(q) v = 0`.
pub fn tangent_velocity(spec: &dyn ProblemSpec, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let n = q.len();
    let d = spec.n_constraints();
    let fact = SaddleSystem::new(DMatrix::identity(n, n), spec.d_constraint(q), Orientation::Positive)?
        .factor()?;
    Ok(fact.solve(v, &DVector::zeros(d))?.0)
}

/// Project `q` onto the constraint (seeded at itself) and `v` onto the tangent space there.
pub fn project_state(spec: &dyn ProblemSpec, w: &State) -> Result<State> {
    let (q, _) = project_default(spec, &w.q, &w.q)?;
    let v = tangent_velocity(spec, &q, &w.v)?;
    Ok(State::new(q, v))
}
