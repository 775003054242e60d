//! The symplectic layer: one step `w₁ ↦ w₂` of the discrete Euler–Lagrange
//! equations, in the multiplier ("Stage 4") form.
//!
//! Each step solves `f(x) = 0`, where `x` collects `w₂ = (q₂, v₂)`, the
//! auxiliary configurations, the fiber coordinate `θ⁺` and eleven
//! multipliers, and `f` is [`residual`]. The iteration is
//!
//! ```text
//! x_{i+1} = x_i − J₀⁻¹ f(x_i)
//! ```
//!
//! with `J₀` the linear approximate of [`approximate::ApproximateSystem`],
//! factored once per step. Convergence is judged on the update of `(q₂, v₂)`
//! and on the constraint forces `Dgᵀν`, never on the raw multipliers `ν`,
//! which need not be unique.

pub mod approximate;
pub mod residual;
pub mod variables;

pub use approximate::{approximate_solve, ApproximateSystem};
pub use residual::residual;
pub use variables::{Stage4Residual, Stage4Variables};

use crate::boundary::{self, Bias};
use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, State};
use crate::standard_layer::{BackwardMode, ButcherTableau, StandardLayer};

use approximate::freeze_configuration;
use residual::StepContext;

/// Where the frozen data `G₀`, `M₀` of the approximate are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreezePoint {
    /// The current configuration `q₁`.
    #[default]
    Q1,
    /// The projected forward boundary point `q̄ = ℙ∂̂⁺(w₁)`.
    QBar,
}

/// Coefficient of `hv₂` in the linearized connection equation
/// `Δq₂ − Δq̄ − G₀ᵀΔθ⁺ + hα Δv₂`.
///
/// Only the approximate changes; both variants converge to the same step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApproximateVariant {
    /// `α = α⁺`.
    AsPrinted,
    /// `α = α⁻`, the linearization of `∂̂⁻(w₂) ≈ q₂ + hα⁻v₂`.
    #[default]
    AlphaCorrected,
}

impl ApproximateVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ApproximateVariant::AsPrinted => "as-printed",
            ApproximateVariant::AlphaCorrected => "alpha-corrected",
        }
    }
}

impl std::str::FromStr for ApproximateVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "alpha-corrected" => Ok(Self::AlphaCorrected),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected as-printed or alpha-corrected)"
            ))),
        }
    }
}

/// Parameters of one symplectic-layer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    /// Time step. Negative values run the step backwards.
    pub h: f64,
    pub bias: Bias,
    pub layer: StandardLayer,
    /// Bound on the `∞`-norm of the `(q₂, v₂)` update at convergence.
    pub tol_fixed_point: f64,
    pub max_iter: usize,
    pub freeze_point: FreezePoint,
    pub variant: ApproximateVariant,
    /// Allowed constraint violation of the input state.
    pub tol_constraint: f64,
}

impl StepConfig {
    /// RK4 layer, bias `(0, 1)`, default tolerances.
    pub fn new(h: f64) -> Self {
        Self {
            h,
            bias: Bias::default(),
            layer: StandardLayer::new(ButcherTableau::rk4()),
            tol_fixed_point: 1e-12,
            max_iter: 50,
            freeze_point: FreezePoint::Q1,
            variant: ApproximateVariant::AlphaCorrected,
            tol_constraint: 1e-10,
        }
    }

    /// Bias `(−½, ½)` with the backward boundary map from the adjoint method,
    /// so that a step of `−h` undoes a step of `h`.
    pub fn self_adjoint(h: f64, tableau: ButcherTableau) -> Self {
        Self::new(h)
            .with_bias(Bias::symmetric())
            .with_layer(StandardLayer::new(tableau).with_backward(BackwardMode::Adjoint))
    }

    pub fn with_bias(mut self, bias: Bias) -> Self {
        self.bias = bias;
        self
    }

    pub fn with_tableau(mut self, tableau: ButcherTableau) -> Self {
        self.layer.tableau = tableau;
        self
    }

    pub fn with_layer(mut self, layer: StandardLayer) -> Self {
        self.layer = layer;
        self
    }

    pub fn with_variant(mut self, variant: ApproximateVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_freeze_point(mut self, freeze_point: FreezePoint) -> Self {
        self.freeze_point = freeze_point;
        self
    }

    /// The same configuration with the step reversed.
    pub fn reversed(&self) -> Self {
        Self {
            h: -self.h,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.h.is_finite() || self.h == 0.0 {
            return Err(Error::InvalidConfig(format!("h must be finite and nonzero, got {}", self.h)));
        }
        if !(self.tol_fixed_point > 0.0 && self.tol_constraint > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.layer.substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        if !self.layer.tableau.is_explicit() {
            return Err(Error::InvalidConfig(format!(
                "tableau {:?} is not explicit",
                self.layer.tableau.name()
            )));
        }
        Ok(())
    }
}

/// Record of one converged step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: usize,
    /// `∞`-norm of the residual at the last evaluated iterate (the one whose
    /// update met the tolerance).
    pub residual_norm: f64,
    pub residual_blocks: Vec<(&'static str, f64)>,
    /// `‖g(q₂)‖∞`
    pub position_violation: f64,
    /// `‖Dg(q₂) v₂‖∞`
    pub velocity_violation: f64,
    /// `‖G₀ᵀν‖∞` for `ν₁⁻, ν₂⁻, ν₁⁺, ν₂⁺` at the solution.
    pub constraint_forces: Vec<(&'static str, f64)>,
    /// `‖Δ(q₂, v₂)‖∞` per iteration.
    pub update_history: Vec<f64>,
}

fn check_on_constraint(spec: &dyn ProblemSpec, w: &State, tol: f64) -> Result<()> {
    let (g, gv) = model::constraint_violation(spec, w);
    if g > tol || gv > tol {
        return Err(Error::InvalidConfig(format!(
            "initial state is off the constraint (|g| = {g:.3e}, |Dg v| = {gv:.3e}, tol = {tol:.1e})"
        )));
    }
    Ok(())
}

fn initialize_with(ctx: &StepContext<'_>) -> Result<Stage4Variables> {
    let (spec, cfg) = (ctx.spec, ctx.config);
    let (n, d) = (ctx.n(), ctx.d());
    let flow = cfg.layer.flow(spec, &ctx.w1, cfg.h)?;
    let (q2, _) = boundary::project_default(spec, &flow.q, &flow.q)?;
    let v2 = boundary::tangent_velocity(spec, &q2, &flow.v)?;
    let w2 = State::new(q2, v2);
    let ends = boundary::boundary_values(&cfg.layer, spec, &w2, cfg.h, cfg.bias)?;
    let (q2_plus, _) = boundary::project_default(spec, &ends.hat_plus, &ends.hat_plus)?;
    let mut x = Stage4Variables::zeros(n, d);
    x.q2 = w2.q;
    x.v2 = w2.v;
    x.q1_minus = ctx.p_minus_1.clone();
    x.q_bar = ctx.p_plus_1.clone();
    x.q2_plus = q2_plus;
    Ok(x)
}

/// Starting iterate: `w₂` from the standard layer, projected onto `TQ`;
/// auxiliary configurations from the projected boundary maps; multipliers
/// and `θ⁺` zero.
pub fn initialize(spec: &dyn ProblemSpec, config: &StepConfig, w1: &State) -> Result<Stage4Variables> {
    let ctx = StepContext::new(spec, config, w1)?;
    initialize_with(&ctx)
}

/// Converged Stage-4 solution together with its diagnostics.
pub fn solve(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w1: &State,
) -> Result<(Stage4Variables, StepDiagnostics)> {
    let ctx = StepContext::new(spec, config, w1)?;
    check_on_constraint(spec, w1, config.tol_constraint)?;
    let q0 = freeze_configuration(config, w1, &ctx.p_plus_1);
    let approx = ApproximateSystem::new(spec, config, &q0, ctx.c1.clone())?;
    let g0 = spec.d_constraint(&q0);
    let mut x = initialize_with(&ctx)?;

    let tol = config.tol_fixed_point;
    let mut history = Vec::new();
    let mut last_norm = f64::INFINITY;
    let mut growth = 0;
    for iteration in 1..=config.max_iter {
        let f = ctx.evaluate(&x)?;
        let norm = f.max_norm();
        if !f.is_finite() {
            return Err(Error::NonConvergence {
                what: "symplectic step",
                iterations: iteration,
                residual: norm,
            });
        }
        growth = if norm > last_norm && norm > tol { growth + 1 } else { 0 };
        if growth >= 3 {
            return Err(Error::NonConvergence {
                what: "symplectic step (residual grew three times in a row)",
                iterations: iteration,
                residual: norm,
            });
        }
        last_norm = norm;

        let delta = approx.solve(&-f.clone())?;
        x += &delta;
        let update = delta.q2.amax().max(delta.v2.amax());
        history.push(update);
        let force_update = [&delta.nu1_minus, &delta.nu2_minus, &delta.nu1_plus, &delta.nu2_plus]
            .into_iter()
            .map(|nu| g0.tr_mul(nu).amax())
            .fold(0.0, f64::max);
        if update <= tol && force_update <= tol {
            let (position_violation, velocity_violation) = model::constraint_violation(spec, &x.state());
            let constraint_forces = vec![
                ("nu1_minus", g0.tr_mul(&x.nu1_minus).amax()),
                ("nu2_minus", g0.tr_mul(&x.nu2_minus).amax()),
                ("nu1_plus", g0.tr_mul(&x.nu1_plus).amax()),
                ("nu2_plus", g0.tr_mul(&x.nu2_plus).amax()),
            ];
            let diag = StepDiagnostics {
                iterations: iteration,
                residual_norm: norm,
                residual_blocks: f.block_norms(),
                position_violation,
                velocity_violation,
                constraint_forces,
                update_history: history,
            };
            return Ok((x, diag));
        }
    }
    Err(Error::NonConvergence {
        what: "symplectic step",
        iterations: config.max_iter,
        residual: last_norm,
    })
}

/// Advance `w1` by one step of the symplectic layer.
pub fn step(spec: &dyn ProblemSpec, config: &StepConfig, w1: &State) -> Result<(State, StepDiagnostics)> {
    solve(spec, config, w1).map(|(x, diag)| (x.state(), diag))
}

/// States `w₀, …, w_n` and per-step diagnostics. On failure, holds the
/// partial trajectory and the error that stopped it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub error: Option<Error>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn into_result(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Apply [`step`] `n_steps` times from `w0`.
pub fn simulate(spec: &dyn ProblemSpec, config: &StepConfig, w0: &State, n_steps: usize) -> Trajectory {
    let mut states = vec![w0.clone()];
    let mut diagnostics = Vec::with_capacity(n_steps);
    let error = simulate_with(spec, config, w0, n_steps, |_, w, diag| {
        states.push(w.clone());
        diagnostics.push(diag.clone());
    })
    .err();
    Trajectory {
        states,
        diagnostics,
        error,
    }
}

/// Like [`simulate`], but hands each new state to `visit(step_index, w, diag)`
/// instead of storing it. Returns the final state.
pub fn simulate_with<F>(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w0: &State,
    n_steps: usize,
    mut visit: F,
) -> Result<State>
where
    F: FnMut(usize, &State, &StepDiagnostics),
{
    config.validate()?;
    let mut w = w0.clone();
    for k in 1..=n_steps {
        let (next, diag) = step(spec, config, &w)?;
        visit(k, &next, &diag);
        w = next;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{by_name, catalog, Circle, SpherePendulum};

    fn sphere_start() -> State {
        State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0])
    }

    #[test]
    fn zero_step_is_rejected() {
        let w1 = State::from_slices(&[1.0, 0.0], &[0.0, 1.0]);
        assert!(matches!(
            initialize(&Circle, &StepConfig::new(0.0), &w1),
            Err(Error::InvalidConfig(_))
        ));
        assert!(StepConfig::new(f64::NAN).validate().is_err());
    }

    #[test]
    fn off_constraint_state_is_rejected() {
        let w1 = State::from_slices(&[1.1, 0.0], &[0.0, 1.0]);
        assert!(step(&Circle, &StepConfig::new(0.05), &w1).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [ApproximateVariant::AsPrinted, ApproximateVariant::AlphaCorrected] {
            assert_eq!(v.name().parse::<ApproximateVariant>().unwrap(), v);
        }
        assert!("newton".parse::<ApproximateVariant>().is_err());
    }

    #[test]
    fn initialize_at_equilibrium_already_solves_the_state_equations() {
        let p = by_name("sphere-pendulum").unwrap();
        let w1 = p.equilibrium.unwrap();
        let config = StepConfig::new(0.05);
        let x = initialize(&SpherePendulum, &config, &w1).unwrap();
        assert!(x.state().max_abs_diff(&w1) < 1e-14);
        let f = residual(&SpherePendulum, &config, &w1, &x).unwrap();
        for name in [
            "projection_minus_1",
            "projection_plus_1",
            "velocity_constraint",
            "connection",
            "position_constraint",
            "projection_plus_2",
        ] {
            let norm = f.block_norms().into_iter().find(|(n, _)| *n == name).unwrap().1;
            assert!(norm <= 1e-12, "{name}: {norm:e}");
        }
    }

    #[test]
    fn initial_guess_is_close_to_the_solution() {
        // With bias (0, 1) the connection fixes q₂ = ℙ(flow) exactly, so the
        // gap is all in v₂.
        let w1 = sphere_start();
        let gap = |h: f64| {
            let config = StepConfig::new(h);
            let seed = initialize(&SpherePendulum, &config, &w1).unwrap();
            let (w2, _) = step(&SpherePendulum, &config, &w1).unwrap();
            seed.state().max_abs_diff(&w2)
        };
        let (coarse, fine) = (gap(0.1), gap(0.05));
        assert!(coarse <= 0.1f64.powi(3) && fine <= 0.05f64.powi(3));
        assert!(coarse / fine >= 8.0);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let w1 = State::from_slices(&[0.0, 0.0, -1.0], &[0.0; 3]);
        let (w2, diag) = step(&SpherePendulum, &StepConfig::new(0.05), &w1).unwrap();
        assert!(w2.max_abs_diff(&w1) <= 1e-12);
        assert!(diag.iterations <= 2);
    }

    #[test]
    fn step_lands_on_the_constraint() {
        let (w2, diag) = step(&SpherePendulum, &StepConfig::new(0.05), &sphere_start()).unwrap();
        let (g, gv) = model::constraint_violation(&SpherePendulum, &w2);
        assert!(g <= 1e-10 && gv <= 1e-10);
        assert_eq!((diag.position_violation, diag.velocity_violation), (g, gv));
    }

    #[test]
    fn converged_residual_is_small_on_every_problem() {
        for p in catalog() {
            let config = StepConfig::new(0.05);
            let (vars, _) = solve(p.spec.as_ref(), &config, &p.default_state).unwrap();
            let f = residual(p.spec.as_ref(), &config, &p.default_state, &vars).unwrap();
            assert!(f.max_norm() <= 100.0 * config.tol_fixed_point, "{}: {:?}", p.name, f.block_norms());
        }
    }

    #[test]
    fn iteration_contracts_on_average() {
        // The dominant error mode of the approximate is a complex pair, so the
        // update norms oscillate; the average rate over the run is what is bounded.
        for p in catalog() {
            for h in [0.05, 0.025] {
                let (_, diag) = step(p.spec.as_ref(), &StepConfig::new(h), &p.default_state).unwrap();
                let hist = &diag.update_history;
                let k = hist.len();
                assert!(k >= 3, "{}", p.name);
                let rate = (hist[k - 1] / hist[1]).powf(1.0 / (k - 2) as f64);
                assert!(rate <= 0.5, "{} at h={h}: rate {rate}", p.name);
            }
        }
    }

    #[test]
    fn variants_and_freeze_points_agree() {
        let w1 = sphere_start();
        let base = step(&SpherePendulum, &StepConfig::new(0.05), &w1).unwrap().0;
        for config in [
            StepConfig::new(0.05).with_variant(ApproximateVariant::AsPrinted),
            StepConfig::new(0.05).with_freeze_point(FreezePoint::QBar),
        ] {
            let (w2, _) = step(&SpherePendulum, &config, &w1).unwrap();
            assert!(w2.max_abs_diff(&base) < 1e-11);
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let config = StepConfig {
            max_iter: 2,
            ..StepConfig::new(0.05)
        };
        let err = step(&SpherePendulum, &config, &sphere_start()).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn self_adjoint_step_reverses() {
        let config = StepConfig::self_adjoint(0.05, ButcherTableau::midpoint());
        for (spec, w1) in [
            (&Circle as &dyn ProblemSpec, State::from_slices(&[1.0, 0.0], &[0.0, 1.0])),
            (&SpherePendulum as &dyn ProblemSpec, sphere_start()),
        ] {
            let (w2, _) = step(spec, &config, &w1).unwrap();
            let (back, _) = step(spec, &config.reversed(), &w2).unwrap();
            assert!(back.max_abs_diff(&w1) <= 1e-9);
        }
    }

    #[test]
    fn simulate_edges() {
        let config = StepConfig::new(0.05);
        let w0 = sphere_start();
        let traj = simulate(&SpherePendulum, &config, &w0, 0).into_result().unwrap();
        assert_eq!(traj.states, vec![w0]);
        assert!(traj.diagnostics.is_empty());

        let rest = State::from_slices(&[0.0, 0.0, -1.0], &[0.0; 3]);
        let traj = simulate(&SpherePendulum, &StepConfig::new(0.01), &rest, 1000).into_result().unwrap();
        assert_eq!(traj.states.len(), 1001);
        assert!(traj.states.iter().all(|w| w.max_abs_diff(&rest) <= 1e-10));
    }

    #[test]
    fn simulate_keeps_the_partial_trajectory_on_failure() {
        let config = StepConfig {
            max_iter: 2,
            ..StepConfig::new(0.05)
        };
        let traj = simulate(&SpherePendulum, &config, &sphere_start(), 5);
        assert_eq!(traj.states.len(), 1);
        assert!(matches!(traj.error, Some(Error::NonConvergence { .. })));
    }
}
