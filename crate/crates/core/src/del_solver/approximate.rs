//! The linear approximate `f₀` of the Stage-4 residual and its sequential solve.
//!
//! With frozen data `G₀ = Dg(q₀)`, `M₀ = m(q₀)` at the freeze point, the
//! boundary maps are replaced by their leading-order forms `∂̂±(w) ≈ q + hα±v`,
//! `DL_h(w) ≈ h DL(w)` and `Dℙᵀ ≈ T₀` (the orthogonal projector onto
//! `ker G₀`). The resulting linear system decouples into a short sequence of
//! saddle solves that share two factorizations:
//!
//! * `[[I, G₀ᵀ], [G₀, 0]]` for the multiplier combinations, `(q₂, θ⁺)` and `T₀`;
//! * `[[M₀, −G₀ᵀ], [−G₀, 0]]` for `(v₂, ν₂⁺)`.
//!
//! The approximate acts on updates: `solve(b)` returns `Δ` with `J₀Δ = b`.
//! Its constant part cancels in the fixed-point iteration, so only `J₀`
//! matters.

use nalgebra::{DMatrix, DVector};

use super::variables::{Stage4Residual, Stage4Variables};
use super::{ApproximateVariant, FreezePoint, StepConfig};
use crate::error::Result;
use crate::model::{ProblemSpec, State};
use crate::saddle::{Orientation, SaddleFactorization, SaddleSystem};

/// The factored approximate for one step.
#[derive(Debug, Clone)]
pub struct ApproximateSystem {
    h: f64,
    alpha_minus: f64,
    alpha_plus: f64,
    /// Coefficient of `hΔv₂` in the linearized connection equation.
    alpha_connection: f64,
    g0: DMatrix<f64>,
    m0: DMatrix<f64>,
    c1: DMatrix<f64>,
    identity: SaddleFactorization,
    mass: SaddleFactorization,
}

impl ApproximateSystem {
    /// Factor the approximate with data frozen at `q0`; `c1 = v₁ᵀD²g(q₁)`.
    pub fn new(
        spec: &dyn ProblemSpec,
        config: &StepConfig,
        q0: &DVector<f64>,
        c1: DMatrix<f64>,
    ) -> Result<Self> {
        let n = spec.dim();
        let g0 = spec.d_constraint(q0);
        let m0 = spec.mass(q0);
        let identity =
            SaddleSystem::new(DMatrix::identity(n, n), g0.clone(), Orientation::Positive)?.factor()?;
        let mass = SaddleSystem::new(m0.clone(), g0.clone(), Orientation::Negative)?.factor()?;
        let bias = config.bias;
        let alpha_connection = match config.variant {
            ApproximateVariant::AsPrinted => bias.alpha_plus(),
            ApproximateVariant::AlphaCorrected => bias.alpha_minus(),
        };
        Ok(Self {
            h: config.h,
            alpha_minus: bias.alpha_minus(),
            alpha_plus: bias.alpha_plus(),
            alpha_connection,
            g0,
            m0,
            c1,
            identity,
            mass,
        })
    }

    /// `T₀x`: orthogonal projection onto `ker G₀`.
    fn tangential(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.g0.nrows();
        Ok(self.identity.solve(x, &DVector::zeros(d))?.0)
    }

    /// Solve `J₀Δ = b` in the sequential order.
    pub fn solve(&self, b: &Stage4Residual) -> Result<Stage4Variables> {
        let h = self.h;
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        let g0 = &self.g0;

        let dq1_minus = b.projection_minus_1.clone();
        let dq_bar = b.projection_plus_1.clone();

        // α⁻λ⁻ + α⁺μ and ν₂⁻ from the v₁-stationarity equation.
        let (y, nu2m_scaled) = self.identity.solve(
            &(&b.stationarity_v1 / h),
            &(&b.tangency_lambda_minus * am + &b.tangency_mu * ap),
        )?;
        let dnu2_minus = nu2m_scaled * h;
        let coupling = self.c1.tr_mul(&dnu2_minus);

        // λ⁻ + μ and ν₁⁻ from the q₁-stationarity equation.
        let (z, dnu1_minus) = self.identity.solve(
            &(&b.stationarity_q1 - &coupling),
            &(&b.tangency_lambda_minus + &b.tangency_mu),
        )?;
        let dmu = &y - &z * am;
        let dlambda_minus = &z * ap - &y;

        // λ⁺ − μ and ν₁⁺ from the q₂-stationarity equation.
        let (w, dnu1_plus) = self.identity.solve(
            &(&b.stationarity_q2 - &coupling),
            &(&b.tangency_lambda_plus - &b.tangency_mu),
        )?;
        let dlambda_plus = w + &dmu;

        // v₂ and ν₂⁺ from the v₂-stationarity equation.
        let top = (&b.stationarity_v2 + &dlambda_plus * (h * ap) - &dmu * (h * am)) / h;
        let (dv2, nu2p_scaled) = self.mass.solve(&top, &-&b.velocity_constraint)?;
        let dnu2_plus = nu2p_scaled * h;

        // q₂ and θ⁺ from the connection and position constraint.
        let (dq2, minus_theta) = self.identity.solve(
            &(&b.connection + &dq_bar - &dv2 * (h * self.alpha_connection)),
            &(&b.position_constraint + g0 * &dq_bar),
        )?;
        let dtheta_plus = -minus_theta;

        let dlambda_hat_minus = &b.hat_lambda_minus + self.tangential(&dlambda_minus)?;
        let dlambda_hat_plus = &b.hat_lambda_plus + self.tangential(&dlambda_plus)?;
        let t_mu = self.tangential(&dmu)?;
        let dmu_hat_1 = &b.hat_mu_1 + &t_mu;
        let dmu_hat_2 = &b.hat_mu_2 + &t_mu;
        let dq2_plus = &b.projection_plus_2 + self.tangential(&(&dq2 + &dv2 * (h * ap)))?;

        Ok(Stage4Variables {
            q2: dq2,
            v2: dv2,
            q1_minus: dq1_minus,
            q_bar: dq_bar,
            q2_plus: dq2_plus,
            theta_plus: dtheta_plus,
            lambda_minus: dlambda_minus,
            lambda_plus: dlambda_plus,
            mu: dmu,
            lambda_hat_minus: dlambda_hat_minus,
            lambda_hat_plus: dlambda_hat_plus,
            mu_hat_1: dmu_hat_1,
            mu_hat_2: dmu_hat_2,
            nu1_minus: dnu1_minus,
            nu2_minus: dnu2_minus,
            nu1_plus: dnu1_plus,
            nu2_plus: dnu2_plus,
        })
    }

    /// `J₀x`, the forward action of the approximate.
    pub fn apply(&self, x: &Stage4Variables) -> Result<Stage4Residual> {
        let h = self.h;
        let (am, ap) = (self.alpha_minus, self.alpha_plus);
        let g0 = &self.g0;
        let gt = |nu: &DVector<f64>| g0.tr_mul(nu);
        let coupling = self.c1.tr_mul(&x.nu2_minus);
        Ok(Stage4Residual {
            projection_minus_1: x.q1_minus.clone(),
            projection_plus_1: x.q_bar.clone(),
            stationarity_q1: &x.lambda_minus + &x.mu + gt(&x.nu1_minus) + &coupling,
            tangency_lambda_minus: g0 * &x.lambda_minus,
            hat_lambda_minus: &x.lambda_hat_minus - self.tangential(&x.lambda_minus)?,
            stationarity_v1: &x.lambda_minus * (h * am) + &x.mu * (h * ap) + gt(&x.nu2_minus),
            tangency_mu: g0 * &x.mu,
            hat_mu_1: &x.mu_hat_1 - self.tangential(&x.mu)?,
            stationarity_q2: &x.lambda_plus - &x.mu + gt(&x.nu1_plus) + &coupling,
            tangency_lambda_plus: g0 * &x.lambda_plus,
            hat_lambda_plus: &x.lambda_hat_plus - self.tangential(&x.lambda_plus)?,
            stationarity_v2: &self.m0 * &x.v2 * h - gt(&x.nu2_plus) - &x.lambda_plus * (h * ap)
                + &x.mu * (h * am),
            velocity_constraint: g0 * &x.v2,
            hat_mu_2: &x.mu_hat_2 - self.tangential(&x.mu)?,
            connection: &x.q2 - &x.q_bar - gt(&x.theta_plus) + &x.v2 * (h * self.alpha_connection),
            position_constraint: g0 * (&x.q2 - &x.q_bar),
            projection_plus_2: &x.q2_plus - self.tangential(&(&x.q2 + &x.v2 * (h * ap)))?,
        })
    }
}

/// The configuration supplying `G₀`, `M₀`.
pub(crate) fn freeze_configuration(config: &StepConfig, w1: &State, q_bar: &DVector<f64>) -> DVector<f64> {
    match config.freeze_point {
        FreezePoint::Q1 => w1.q.clone(),
        FreezePoint::QBar => q_bar.clone(),
    }
}

/// Solve the approximate system `J₀Δ = rhs` for a step from `w1`.
pub fn approximate_solve(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    rhs: &Stage4Residual,
    w1: &State,
) -> Result<Stage4Variables> {
    let ctx = super::residual::StepContext::new(spec, config, w1)?;
    let q0 = freeze_configuration(config, w1, &ctx.p_plus_1);
    ApproximateSystem::new(spec, config, &q0, ctx.c1.clone())?.solve(rhs)
}
