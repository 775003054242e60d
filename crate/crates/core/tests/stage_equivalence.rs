//! The fixed-point step against a dense Newton solve of the multiplier form
//! of the discrete Euler–Lagrange equations.

mod common;

use rk_variational::boundary::Bias;
use rk_variational::del_solver::{self, StepConfig};
use rk_variational::problems;
use rk_variational::standard_layer::ButcherTableau;

fn gap(name: &str, config: &StepConfig) -> f64 {
    let p = problems::by_name(name).unwrap();
    let spec = p.spec.as_ref();
    let guess = del_solver::initialize(spec, config, &p.default_state).unwrap().state();
    let (w2, _) = del_solver::step(spec, config, &p.default_state).unwrap();
    let dense = common::dense_newton_step(spec, config, &p.default_state, &guess);
    w2.max_abs_diff(&dense)
}

#[test]
fn circle_matches_the_dense_solve() {
    assert!(gap("circle", &StepConfig::new(0.1)) <= 1e-10);
}

#[test]
fn symmetric_bias_matches_the_dense_solve() {
    let config = StepConfig::new(0.1).with_bias(Bias::symmetric());
    assert!(gap("circle", &config) <= 1e-10);
    let config = StepConfig::self_adjoint(0.1, ButcherTableau::midpoint());
    assert!(gap("sphere-pendulum", &config) <= 1e-10);
}

#[test]
fn problems_with_nontrivial_geometry_match() {
    for name in ["magnetic-sphere", "curved-mass-circle", "quartic-curve"] {
        let g = gap(name, &StepConfig::new(0.1));
        assert!(g <= 1e-9, "{name}: {g:e}");
    }
}
