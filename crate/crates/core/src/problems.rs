//! Built-in constrained systems with analytic derivatives.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::boundary;
use crate::error::{Error, Result};
use crate::geometry::GroupActionSpec;
use crate::model::{ProblemSpec, State};
use crate::standard_layer::{rk_flow, ButcherTableau};

fn col(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Infinitesimal rotation about the third axis.
fn vertical_rotation() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
}

// Shared pieces for g(q) = |q|² − 1.

fn unit_sphere(q: &DVector<f64>) -> DVector<f64> {
    col(&[q.norm_squared() - 1.0])
}

fn d_unit_sphere(q: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, q.len(), |_, j| 2.0 * q[j])
}

fn d2_unit_sphere(u: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, u.len(), |_, j| 2.0 * u[j])
}

/// Free particle on the unit circle.
#[derive(Debug, Clone, Copy, Default)]
pub struct Circle;

impl ProblemSpec for Circle {
    fn dim(&self) -> usize {
        2
    }
    fn n_constraints(&self) -> usize {
        1
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn d_mass(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }
    fn d2_mass(&self, _q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        vec![vec![DMatrix::zeros(2, 2); 2]; 2]
    }
    fn d2_one_form(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }
    fn potential(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }
    fn d_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn d2_potential(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn constraint(&self, q: &DVector<f64>) -> DVector<f64> {
        unit_sphere(q)
    }
    fn d_constraint(&self, q: &DVector<f64>) -> DMatrix<f64> {
        d_unit_sphere(q)
    }
    fn d2_constraint_contract(&self, _q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        d2_unit_sphere(u)
    }
    fn d3_constraint_contract(&self, _q: &DVector<f64>, _u: &DVector<f64>, _w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }
}

/// Unit-length pendulum in uniform gravity, `V = q₃`.
///
/// With an optional magnetic one-form `a(q) = κ(−q₂, q₁, 0)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpherePendulum;

/// [`SpherePendulum`] plus the one-form `a(q) = κ(−q₂, q₁, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct MagneticSphere {
    pub kappa: f64,
}

impl Default for MagneticSphere {
    fn default() -> Self {
        Self { kappa: 0.5 }
    }
}

macro_rules! sphere_common {
    () => {
        fn dim(&self) -> usize {
            3
        }
        fn n_constraints(&self) -> usize {
            1
        }
        fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(3, 3)
        }
        fn d_mass(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
            vec![DMatrix::zeros(3, 3); 3]
        }
        fn d2_mass(&self, _q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
            vec![vec![DMatrix::zeros(3, 3); 3]; 3]
        }
        fn d2_one_form(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
            vec![DMatrix::zeros(3, 3); 3]
        }
        fn potential(&self, q: &DVector<f64>) -> f64 {
            q[2]
        }
        fn d_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
            col(&[0.0, 0.0, 1.0])
        }
        fn d2_potential(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(3, 3)
        }
        fn constraint(&self, q: &DVector<f64>) -> DVector<f64> {
            unit_sphere(q)
        }
        fn d_constraint(&self, q: &DVector<f64>) -> DMatrix<f64> {
            d_unit_sphere(q)
        }
        fn d2_constraint_contract(&self, _q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
            d2_unit_sphere(u)
        }
        fn d3_constraint_contract(
            &self,
            _q: &DVector<f64>,
            _u: &DVector<f64>,
            _w: &DVector<f64>,
        ) -> DMatrix<f64> {
            DMatrix::zeros(1, 3)
        }
    };
}

impl ProblemSpec for SpherePendulum {
    sphere_common!();
}

impl ProblemSpec for MagneticSphere {
    sphere_common!();

    fn one_form(&self, q: &DVector<f64>) -> DVector<f64> {
        col(&[-q[1], q[0], 0.0]) * self.kappa
    }
    fn d_one_form(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        vertical_rotation() * self.kappa
    }
}

/// Two unit-length links in gravity: `|q⁽¹⁾|² = 1`, `|q⁽²⁾ − q⁽¹⁾|² = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleSpherePendulum;

impl ProblemSpec for DoubleSpherePendulum {
    fn dim(&self) -> usize {
        6
    }
    fn n_constraints(&self) -> usize {
        2
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(6, 6)
    }
    fn d_mass(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(6, 6); 6]
    }
    fn d2_mass(&self, _q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        vec![vec![DMatrix::zeros(6, 6); 6]; 6]
    }
    fn d2_one_form(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(6, 6); 6]
    }
    fn potential(&self, q: &DVector<f64>) -> f64 {
        q[2] + q[5]
    }
    fn d_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
        col(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    }
    fn d2_potential(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(6, 6)
    }
    fn constraint(&self, q: &DVector<f64>) -> DVector<f64> {
        let first = q.rows(0, 3);
        let link = q.rows(3, 3) - first;
        col(&[first.norm_squared() - 1.0, link.norm_squared() - 1.0])
    }
    fn d_constraint(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let first = q.rows(0, 3);
        let link = q.rows(3, 3) - first;
        let mut g = DMatrix::zeros(2, 6);
        for i in 0..3 {
            g[(0, i)] = 2.0 * first[i];
            g[(1, i)] = -2.0 * link[i];
            g[(1, i + 3)] = 2.0 * link[i];
        }
        g
    }
    fn d2_constraint_contract(&self, _q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(2, 6);
        for i in 0..3 {
            m[(0, i)] = 2.0 * u[i];
            m[(1, i)] = 2.0 * (u[i] - u[i + 3]);
            m[(1, i + 3)] = 2.0 * (u[i + 3] - u[i]);
        }
        m
    }
    fn d3_constraint_contract(&self, _q: &DVector<f64>, _u: &DVector<f64>, _w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 6)
    }
}

/// Unit circle with position-dependent mass `m(q) = (1 + ½q₁²) I`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CurvedMassCircle;

impl ProblemSpec for CurvedMassCircle {
    fn dim(&self) -> usize {
        2
    }
    fn n_constraints(&self) -> usize {
        1
    }
    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2) * (1.0 + 0.5 * q[0] * q[0])
    }
    fn d_mass(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::identity(2, 2) * q[0], DMatrix::zeros(2, 2)]
    }
    fn d2_mass(&self, _q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        let mut out = vec![vec![DMatrix::zeros(2, 2); 2]; 2];
        out[0][0] = DMatrix::identity(2, 2);
        out
    }
    fn d2_one_form(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }
    fn potential(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }
    fn d_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn d2_potential(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn constraint(&self, q: &DVector<f64>) -> DVector<f64> {
        unit_sphere(q)
    }
    fn d_constraint(&self, q: &DVector<f64>) -> DMatrix<f64> {
        d_unit_sphere(q)
    }
    fn d2_constraint_contract(&self, _q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        d2_unit_sphere(u)
    }
    fn d3_constraint_contract(&self, _q: &DVector<f64>, _u: &DVector<f64>, _w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }
}

/// Particle on the quartic curve `q₁⁴ + q₂² = 1` with `V = q₂`; the only
/// built-in problem with a nonzero third constraint derivative.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuarticCurve;

impl ProblemSpec for QuarticCurve {
    fn dim(&self) -> usize {
        2
    }
    fn n_constraints(&self) -> usize {
        1
    }
    fn mass(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn d_mass(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }
    fn d2_mass(&self, _q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        vec![vec![DMatrix::zeros(2, 2); 2]; 2]
    }
    fn d2_one_form(&self, _q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(2, 2); 2]
    }
    fn potential(&self, q: &DVector<f64>) -> f64 {
        q[1]
    }
    fn d_potential(&self, _q: &DVector<f64>) -> DVector<f64> {
        col(&[0.0, 1.0])
    }
    fn d2_potential(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn constraint(&self, q: &DVector<f64>) -> DVector<f64> {
        col(&[q[0].powi(4) + q[1] * q[1] - 1.0])
    }
    fn d_constraint(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[4.0 * q[0].powi(3), 2.0 * q[1]])
    }
    fn d2_constraint_contract(&self, q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[12.0 * q[0] * q[0] * u[0], 2.0 * u[1]])
    }
    fn d3_constraint_contract(&self, q: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[24.0 * q[0] * u[0] * w[0], 0.0])
    }
}

/// A catalog entry: a problem with its default data.
#[derive(Clone)]
pub struct NamedProblem {
    pub name: &'static str,
    pub spec: Arc<dyn ProblemSpec>,
    pub default_state: State,
    /// Symmetry generators under which the Lagrangian and constraint are invariant.
    pub symmetry: Option<GroupActionSpec>,
    /// A rest state, when one is known in closed form.
    pub equilibrium: Option<State>,
}

impl std::fmt::Debug for NamedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NamedProblem")
            .field("name", &self.name)
            .field("dim", &self.spec.dim())
            .field("n_constraints", &self.spec.n_constraints())
            .field("default_state", &self.default_state)
            .finish()
    }
}

/// Names of every catalog entry, in catalog order.
pub const PROBLEM_NAMES: [&str; 6] = [
    "circle",
    "sphere-pendulum",
    "double-sphere-pendulum",
    "magnetic-sphere",
    "curved-mass-circle",
    "quartic-curve",
];

pub fn catalog() -> Vec<NamedProblem> {
    PROBLEM_NAMES
        .iter()
        .map(|name| by_name(name).expect("catalog names resolve"))
        .collect()
}

pub fn by_name(name: &str) -> Result<NamedProblem> {
    let vertical = || GroupActionSpec::new(vec![("vertical-rotation", vertical_rotation())]);
    let planar = || {
        GroupActionSpec::new(vec![(
            "rotation",
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
        )])
    };
    let problem = match name {
        "circle" => NamedProblem {
            name: "circle",
            spec: Arc::new(Circle),
            default_state: State::from_slices(&[1.0, 0.0], &[0.0, 1.0]),
            symmetry: Some(planar()),
            equilibrium: Some(State::from_slices(&[1.0, 0.0], &[0.0, 0.0])),
        },
        "sphere-pendulum" => NamedProblem {
            name: "sphere-pendulum",
            spec: Arc::new(SpherePendulum),
            default_state: State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]),
            symmetry: Some(vertical()),
            equilibrium: Some(State::from_slices(&[0.0, 0.0, -1.0], &[0.0, 0.0, 0.0])),
        },
        "double-sphere-pendulum" => {
            let r = vertical_rotation();
            let mut block = DMatrix::zeros(6, 6);
            block.view_mut((0, 0), (3, 3)).copy_from(&r);
            block.view_mut((3, 3), (3, 3)).copy_from(&r);
            NamedProblem {
                name: "double-sphere-pendulum",
                spec: Arc::new(DoubleSpherePendulum),
                default_state: State::from_slices(
                    &[1.0, 0.0, 0.0, 1.0, 0.0, -1.0],
                    &[0.0, 0.5, 0.0, 0.3, 0.8, 0.0],
                ),
                symmetry: Some(GroupActionSpec::new(vec![("vertical-rotation", block)])),
                equilibrium: Some(State::from_slices(
                    &[0.0, 0.0, -1.0, 0.0, 0.0, -2.0],
                    &[0.0; 6],
                )),
            }
        }
        "magnetic-sphere" => NamedProblem {
            name: "magnetic-sphere",
            spec: Arc::new(MagneticSphere::default()),
            default_state: State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]),
            symmetry: Some(vertical()),
            equilibrium: Some(State::from_slices(&[0.0, 0.0, -1.0], &[0.0, 0.0, 0.0])),
        },
        "curved-mass-circle" => NamedProblem {
            name: "curved-mass-circle",
            spec: Arc::new(CurvedMassCircle),
            default_state: State::from_slices(&[1.0, 0.0], &[0.0, 1.0]),
            symmetry: None,
            equilibrium: Some(State::from_slices(&[1.0, 0.0], &[0.0, 0.0])),
        },
        "quartic-curve" => NamedProblem {
            name: "quartic-curve",
            spec: Arc::new(QuarticCurve),
            default_state: State::from_slices(&[0.0, 1.0], &[1.0, 0.0]),
            symmetry: None,
            equilibrium: Some(State::from_slices(&[0.0, -1.0], &[0.0, 0.0])),
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown problem {other:?} (expected one of {})",
                PROBLEM_NAMES.join(", ")
            )))
        }
    };
    Ok(problem)
}

/// High-accuracy solution at time `t` for convergence studies: RK4 with
/// steps of at most `fine_h`, then projected back onto the constraint.
pub fn reference_solution(spec: &dyn ProblemSpec, w0: &State, t: f64, fine_h: f64) -> Result<State> {
    if !(fine_h > 0.0) {
        return Err(Error::InvalidConfig(format!("fine_h must be positive, got {fine_h}")));
    }
    if t == 0.0 {
        return Ok(w0.clone());
    }
    let substeps = (t.abs() / fine_h).ceil().max(1.0) as usize;
    let out = rk_flow(&ButcherTableau::rk4(), spec, w0, t, substeps)?;
    boundary::project_state(spec, &out.state())
}
