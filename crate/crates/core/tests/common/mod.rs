//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rk_variational::boundary;
use rk_variational::del_solver::StepConfig;
use rk_variational::fd;
use rk_variational::model::{ProblemSpec, State};

/// Step for the fourth-order differences of the boundary maps.
const MAP_STEP: f64 = 1e-3;
/// Step for the Newton Jacobian of the multiplier system.
const NEWTON_STEP: f64 = 1e-6;

fn split(w: &DVector<f64>, n: usize) -> State {
    State::new(w.rows(0, n).into_owned(), w.rows(n, n).into_owned())
}

/// `(∂⁻(w), ∂⁺(w), L_h(w))`, with the projected boundary maps.
fn ends(spec: &dyn ProblemSpec, config: &StepConfig, w: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64) {
    let w = split(w, spec.dim());
    let b = boundary::boundary_values(&config.layer, spec, &w, config.h, config.bias).unwrap();
    let (m, _) = boundary::project_default(spec, &b.hat_minus, &b.hat_minus).unwrap();
    let (p, _) = boundary::project_default(spec, &b.hat_plus, &b.hat_plus).unwrap();
    (m, p, b.lh)
}

/// Boundary maps and the discrete Lagrangian with their derivatives, all by
/// fourth-order differences.
struct Differentiated {
    minus: DVector<f64>,
    plus: DVector<f64>,
    d_minus: DMatrix<f64>,
    d_plus: DMatrix<f64>,
    d_lh: DVector<f64>,
}

fn differentiate(spec: &dyn ProblemSpec, config: &StepConfig, w: &DVector<f64>) -> Differentiated {
    let (minus, plus, _) = ends(spec, config, w);
    let d_minus = fd::jacobian4(|x| ends(spec, config, x).0, w, MAP_STEP);
    let d_plus = fd::jacobian4(|x| ends(spec, config, x).1, w, MAP_STEP);
    let d_lh = fd::jacobian4(|x| DVector::from_element(1, ends(spec, config, x).2), w, MAP_STEP)
        .row(0)
        .transpose();
    Differentiated {
        minus,
        plus,
        d_minus,
        d_plus,
        d_lh,
    }
}

/// `[Dg(q), 0]` and `[vᵀD²g(q), Dg(q)]` as `d×2N` rows, the second by differences.
fn tq_rows(spec: &dyn ProblemSpec, w: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = spec.dim();
    let d = spec.n_constraints();
    let s = split(w, n);
    let g = spec.d_constraint(&s.q);
    let curvature = fd::jacobian4(|q| spec.d_constraint(q) * &s.v, &s.q, MAP_STEP);
    let mut position = DMatrix::zeros(d, 2 * n);
    position.columns_mut(0, n).copy_from(&g);
    let mut velocity = DMatrix::zeros(d, 2 * n);
    velocity.columns_mut(0, n).copy_from(&curvature);
    velocity.columns_mut(n, n).copy_from(&g);
    (position, velocity)
}

/// Residual of the multiplier system for unknowns
/// `x = (q₂, v₂, λ⁻, λ⁺, μ, ν₁⁻, ν₂⁻, ν₁⁺, ν₂⁺)`.
fn multiplier_residual(spec: &dyn ProblemSpec, config: &StepConfig, w1: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let n = spec.dim();
    let d = spec.n_constraints();
    let w2 = x.rows(0, 2 * n).into_owned();
    let lambda_minus = x.rows(2 * n, n);
    let lambda_plus = x.rows(3 * n, n);
    let mu = x.rows(4 * n, n);
    let nu = |k: usize| x.rows(5 * n + k * d, d);

    let a = differentiate(spec, config, w1);
    let b = differentiate(spec, config, &w2);
    let (pos1, vel1) = tq_rows(spec, w1);
    let (pos2, vel2) = tq_rows(spec, &w2);

    let first = &a.d_lh
        - a.d_minus.tr_mul(&lambda_minus)
        - a.d_plus.tr_mul(&mu)
        - pos1.tr_mul(&nu(0))
        - vel1.tr_mul(&nu(1));
    let second = &b.d_lh - b.d_plus.tr_mul(&lambda_plus) + b.d_minus.tr_mul(&mu)
        - pos2.tr_mul(&nu(2))
        - vel2.tr_mul(&nu(3));
    let connection = &a.plus - &b.minus;
    let s2 = split(&w2, n);

    let mut parts: Vec<f64> = Vec::new();
    parts.extend(first.iter());
    parts.extend(second.iter());
    parts.extend(connection.iter());
    parts.extend((spec.d_constraint(&a.minus) * lambda_minus).iter());
    parts.extend((spec.d_constraint(&a.plus) * mu).iter());
    parts.extend((spec.d_constraint(&b.plus) * lambda_plus).iter());
    parts.extend(spec.constraint(&s2.q).iter());
    parts.extend((spec.d_constraint(&s2.q) * &s2.v).iter());
    DVector::from_vec(parts)
}

/// Solve the multiplier form of the discrete Euler–Lagrange equations by
/// dense Gauss–Newton, starting from `guess` for `w₂` and zero multipliers.
///
/// Everything is differentiated numerically; nothing is shared with the
/// fixed-point solver except the boundary-map values themselves.
pub fn dense_newton_step(spec: &dyn ProblemSpec, config: &StepConfig, w1: &State, guess: &State) -> State {
    let n = spec.dim();
    let d = spec.n_constraints();
    let w1 = w1.to_vector();
    let mut x = DVector::zeros(5 * n + 4 * d);
    x.rows_mut(0, 2 * n).copy_from(&guess.to_vector());
    for _ in 0..30 {
        let f = multiplier_residual(spec, config, &w1, &x);
        let jac = fd::jacobian(|y| multiplier_residual(spec, config, &w1, y), &x, NEWTON_STEP);
        let delta = jac.svd(true, true).solve(&-f, 1e-12).unwrap();
        x += &delta;
        if delta.amax() < 1e-12 {
            break;
        }
    }
    split(&x.rows(0, 2 * n).into_owned(), n)
}
