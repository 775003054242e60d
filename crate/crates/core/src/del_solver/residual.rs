//! The full nonlinear Stage-4 residual.

use nalgebra::{DMatrix, DVector};

use super::variables::{Stage4Residual, Stage4Variables};
use super::StepConfig;
use crate::boundary::{self, BoundaryData};
use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, State};

/// Everything in the residual that depends only on `w₁`.
pub(crate) struct StepContext<'a> {
    pub spec: &'a dyn ProblemSpec,
    pub config: &'a StepConfig,
    pub w1: State,
    pub bd1: BoundaryData,
    /// `ℙ∂̂⁻(w₁)`
    pub p_minus_1: DVector<f64>,
    /// `ℙ∂̂⁺(w₁)`
    pub p_plus_1: DVector<f64>,
    pub g1: DMatrix<f64>,
    /// `v₁ᵀD²g(q₁)`
    pub c1: DMatrix<f64>,
}

impl<'a> StepContext<'a> {
    pub fn new(spec: &'a dyn ProblemSpec, config: &'a StepConfig, w1: &State) -> Result<Self> {
        config.validate()?;
        model::check_state(spec, w1)?;
        let bd1 = boundary::boundary_data(&config.layer, spec, w1, config.h, config.bias)?;
        let (p_minus_1, _) = boundary::project_default(spec, &bd1.hat_minus, &bd1.hat_minus)?;
        let (p_plus_1, _) = boundary::project_default(spec, &bd1.hat_plus, &bd1.hat_plus)?;
        Ok(Self {
            spec,
            config,
            g1: spec.d_constraint(&w1.q),
            c1: spec.d2_constraint_contract(&w1.q, &w1.v),
            w1: w1.clone(),
            bd1,
            p_minus_1,
            p_plus_1,
        })
    }

    pub fn n(&self) -> usize {
        self.spec.dim()
    }

    pub fn d(&self) -> usize {
        self.spec.n_constraints()
    }

    pub fn evaluate(&self, x: &Stage4Variables) -> Result<Stage4Residual> {
        let spec = self.spec;
        let cfg = self.config;
        let (n, d) = (self.n(), self.d());
        check_variables(x, n, d)?;
        let w2 = x.state();
        let bd1 = &self.bd1;
        let bd2 = boundary::boundary_data(&cfg.layer, spec, &w2, cfg.h, cfg.bias)?;
        let (p_plus_2, _) = boundary::project_default(spec, &bd2.hat_plus, &bd2.hat_plus)?;
        let g2 = spec.d_constraint(&x.q2);
        let c2 = spec.d2_constraint_contract(&x.q2, &x.v2);

        let theta_1m = boundary::fiber_coordinate(spec, &x.q1_minus, &bd1.hat_minus);
        let theta_1p = boundary::fiber_coordinate(spec, &x.q_bar, &bd1.hat_plus);
        let theta_2p = boundary::fiber_coordinate(spec, &x.q2_plus, &bd2.hat_plus);

        Ok(Stage4Residual {
            projection_minus_1: &x.q1_minus - &self.p_minus_1,
            projection_plus_1: &x.q_bar - &self.p_plus_1,
            stationarity_q1: bd1.d_hat_minus_q().tr_mul(&x.lambda_hat_minus)
                + self.g1.tr_mul(&x.nu1_minus)
                + bd1.d_hat_plus_q().tr_mul(&x.mu_hat_1)
                + self.c1.tr_mul(&x.nu2_minus)
                - bd1.d_lh_q(),
            tangency_lambda_minus: spec.d_constraint(&x.q1_minus) * &x.lambda_minus,
            hat_lambda_minus: &x.lambda_hat_minus
                - boundary::dproject_transpose(spec, &x.q1_minus, &theta_1m, &x.lambda_minus)?,
            stationarity_v1: bd1.d_hat_plus_v().tr_mul(&x.mu_hat_1)
                + self.g1.tr_mul(&x.nu2_minus)
                + bd1.d_hat_minus_v().tr_mul(&x.lambda_hat_minus)
                - bd1.d_lh_v(),
            tangency_mu: spec.d_constraint(&x.q_bar) * &x.mu,
            hat_mu_1: &x.mu_hat_1 - boundary::dproject_transpose(spec, &x.q_bar, &theta_1p, &x.mu)?,
            stationarity_q2: bd2.d_hat_plus_q().tr_mul(&x.lambda_hat_plus) + g2.tr_mul(&x.nu1_plus)
                - bd2.d_hat_minus_q().tr_mul(&x.mu_hat_2)
                + c2.tr_mul(&x.nu2_plus)
                - bd2.d_lh_q(),
            tangency_lambda_plus: spec.d_constraint(&x.q2_plus) * &x.lambda_plus,
            hat_lambda_plus: &x.lambda_hat_plus
                - boundary::dproject_transpose(spec, &x.q2_plus, &theta_2p, &x.lambda_plus)?,
            stationarity_v2: bd2.d_lh_v() - g2.tr_mul(&x.nu2_plus)
                - bd2.d_hat_plus_v().tr_mul(&x.lambda_hat_plus)
                + bd2.d_hat_minus_v().tr_mul(&x.mu_hat_2),
            velocity_constraint: &g2 * &x.v2,
            hat_mu_2: &x.mu_hat_2 - boundary::dproject_transpose(spec, &x.q_bar, &x.theta_plus, &x.mu)?,
            connection: &bd2.hat_minus - boundary::iota(spec, &x.q_bar, &x.theta_plus),
            position_constraint: spec.constraint(&x.q2),
            projection_plus_2: &x.q2_plus - p_plus_2,
        })
    }
}

fn check_variables(x: &Stage4Variables, n: usize, d: usize) -> Result<()> {
    let found = x.to_vector().len();
    let expected = Stage4Variables::len_for(n, d);
    if found != expected || x.q2.len() != n || x.theta_plus.len() != d {
        return Err(Error::DimensionMismatch {
            expected,
            found,
            context: "Stage-4 variables",
        });
    }
    Ok(())
}

/// Evaluate every Stage-4 equation at `vars`, for a step from `w1`.
pub fn residual(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w1: &State,
    vars: &Stage4Variables,
) -> Result<Stage4Residual> {
    StepContext::new(spec, config, w1)?.evaluate(vars)
}
