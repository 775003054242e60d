//! Constrained Lagrangian systems with a quadratic Lagrangian
//!
//! ```text
//! L(q, v) = ½ vᵀ M(q) v + a(q)·v − V(q),     g(q) = 0 ∈ ℝᵈ
//! ```
//!
//! and the Euler–Lagrange vector field `A(q, v)` obtained from the multiplier
//! system
//!
//! ```text
//! [ M   -Gᵀ ] [A]   [ -Γ(v,v) - b v - ∇V ]
//! [ -G   0  ] [λ] = [ vᵀ D²g v           ]
//! ```
//!
//! with `G = Dg(q)`, `Γ_ikl = ½(∂ₖm_il + ∂ₗm_ik − ∂ᵢm_kl)` and
//! `b_ij = ∂ⱼa_i − ∂ᵢa_j`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fd;
use crate::saddle::{Orientation, SaddleFactorization, SaddleSystem};

/// Step used by the finite-difference fallbacks for the higher derivatives.
pub const FALLBACK_STEP: f64 = 1e-5;

/// A constrained Lagrangian system.
///
/// Implementors supply the mass matrix, one-form, potential and constraint
/// together with their derivatives. The highest derivatives (`d2_mass`,
/// `d2_one_form`, `d3_constraint_contract`) have central-difference defaults
/// built from the next-lower derivative; those defaults are accurate to
/// roughly `1e-10` and are what the field Jacobian sees if not overridden.
pub trait ProblemSpec: Send + Sync {
    /// Configuration dimension `N`.
    fn dim(&self) -> usize;
    /// Number of constraints `d ≥ 1`.
    fn n_constraints(&self) -> usize;

    fn mass(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// `[∂M/∂q⁰, …, ∂M/∂qᴺ⁻¹]`.
    fn d_mass(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>>;
    /// `out[k][l] = ∂²M/∂qᵏ∂qˡ`.
    fn d2_mass(&self, q: &DVector<f64>) -> Vec<Vec<DMatrix<f64>>> {
        let n = self.dim();
        let mut out = vec![vec![DMatrix::zeros(n, n); n]; n];
        for l in 0..n {
            let mut e = DVector::zeros(n);
            e[l] = 1.0;
            let qp = q + &e * FALLBACK_STEP;
            let qm = q - &e * FALLBACK_STEP;
            let (dp, dm) = (self.d_mass(&qp), self.d_mass(&qm));
            for k in 0..n {
                out[k][l] = (&dp[k] - &dm[k]) / (2.0 * FALLBACK_STEP);
            }
        }
        out
    }

    fn one_form(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(q.len())
    }
    /// Entry `(i, j)` is `∂a_i/∂qʲ`.
    fn d_one_form(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(q.len(), q.len())
    }
    /// `out[k]` has entry `(i, j) = ∂²a_i/∂qʲ∂qᵏ`.
    fn d2_one_form(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let mut e = DVector::zeros(n);
                e[k] = 1.0;
                fd::matrix_directional(|x| self.d_one_form(x), q, &e, FALLBACK_STEP)
            })
            .collect()
    }

    fn potential(&self, q: &DVector<f64>) -> f64;
    fn d_potential(&self, q: &DVector<f64>) -> DVector<f64>;
    fn d2_potential(&self, q: &DVector<f64>) -> DMatrix<f64>;

    fn constraint(&self, q: &DVector<f64>) -> DVector<f64>;
    /// `Dg(q)`, a `d×N` matrix.
    fn d_constraint(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// `uᵀD²g(q)`: the `d×N` matrix with entries `uⁱ ∂²gᵃ/∂qⁱ∂qʲ`.
    fn d2_constraint_contract(&self, q: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64>;
    /// The `d×N` matrix with entries `∂³gᵃ/∂qⁱ∂qʲ∂qᵐ uⁱ wʲ`.
    fn d3_constraint_contract(
        &self,
        q: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> DMatrix<f64> {
        fd::matrix_directional(|x| self.d2_constraint_contract(x, u), q, w, FALLBACK_STEP)
    }
}

/// A point `w = (q, v)` of the velocity phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl State {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        assert_eq!(q.len(), v.len(), "q and v must have the same length");
        Self { q, v }
    }

    pub fn from_slices(q: &[f64], v: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `(q, v)` stacked into one vector of length `2N`.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dim();
        DVector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.v[i - n] })
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        Self::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        (&self.q - &other.q).amax().max((&self.v - &other.v).amax())
    }
}

/// A variation `δw = (δq, δv)` attached to some base state.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub dq: DVector<f64>,
    pub dv: DVector<f64>,
}

impl TangentVector {
    pub fn new(dq: DVector<f64>, dv: DVector<f64>) -> Self {
        Self { dq, dv }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dq.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.dq[i] } else { self.dv[i - n] })
    }

    pub fn from_vector(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        Self::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }
}

/// Dense rank-3 array indexed `(i, j, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n0: usize, n1: usize, n2: usize) -> Self {
        Self {
            dims: [n0, n1, n2],
            data: vec![0.0; n0 * n1 * n2],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl std::ops::IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

pub fn lagrangian(spec: &dyn ProblemSpec, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let m = spec.mass(q);
    0.5 * v.dot(&(m * v)) + spec.one_form(q).dot(v) - spec.potential(q)
}

/// `(D_qL, D_vL)` as column vectors.
pub fn d_lagrangian(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = q.len();
    let dm = spec.d_mass(q);
    let da = spec.d_one_form(q);
    let dv_pot = spec.d_potential(q);
    let dql = DVector::from_fn(n, |i, _| 0.5 * v.dot(&(&dm[i] * v))) + da.tr_mul(v) - dv_pot;
    let dvl = spec.mass(q) * v + spec.one_form(q);
    (dql, dvl)
}

/// Christoffel symbols of the first kind, `Γ[(i, k, l)]`.
pub fn christoffel(spec: &dyn ProblemSpec, q: &DVector<f64>) -> Tensor3 {
    christoffel_from(&spec.d_mass(q))
}

fn christoffel_from(dm: &[DMatrix<f64>]) -> Tensor3 {
    let n = dm.len();
    let mut g = Tensor3::zeros(n, n, n);
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                g[(i, k, l)] = 0.5 * (dm[k][(i, l)] + dm[l][(i, k)] - dm[i][(k, l)]);
            }
        }
    }
    g
}

/// The magnetic two-form `b_ij = ∂a_i/∂qʲ − ∂a_j/∂qⁱ` (exactly antisymmetric).
pub fn magnetic(spec: &dyn ProblemSpec, q: &DVector<f64>) -> DMatrix<f64> {
    let da = spec.d_one_form(q);
    &da - da.transpose()
}

/// `D²(θᵀg)(q) = Σₐ θₐ D²gᵃ(q)`, an `N×N` symmetric matrix.
pub fn constraint_hessian(spec: &dyn ProblemSpec, q: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let n = q.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        h.set_column(j, &spec.d2_constraint_contract(q, &e).tr_mul(theta));
    }
    h
}

/// Multiplier-system factorization at `q` (layout `[[M, -Gᵀ], [-G, 0]]`).
pub fn field_factorization(spec: &dyn ProblemSpec, q: &DVector<f64>) -> Result<SaddleFactorization> {
    SaddleSystem::new(spec.mass(q), spec.d_constraint(q), Orientation::Negative)?.factor()
}

/// Euler–Lagrange acceleration `A(q, v)` and multiplier `λ`.
pub fn el_field(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let fact = field_factorization(spec, q)?;
    el_field_with(spec, &fact, q, v)
}

fn force(spec: &dyn ProblemSpec, dm: &[DMatrix<f64>], q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = q.len();
    // Γ_ikl vᵏ vˡ = (Σ_l vˡ ∂ₗM v)_i − ½ vᵀ ∂ᵢM v
    let mut gvv = DVector::zeros(n);
    for (l, dml) in dm.iter().enumerate() {
        gvv += dml * v * v[l];
    }
    for i in 0..n {
        gvv[i] -= 0.5 * v.dot(&(&dm[i] * v));
    }
    -gvv - magnetic(spec, q) * v - spec.d_potential(q)
}

fn el_field_with(
    spec: &dyn ProblemSpec,
    fact: &SaddleFactorization,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let dm = spec.d_mass(q);
    let top = force(spec, &dm, q, v);
    let bottom = spec.d2_constraint_contract(q, v) * v;
    fact.solve(&top, &bottom)
}

/// Derivatives of the field: column `m` of each block is `∂/∂qᵐ` or `∂/∂vᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldJacobian {
    pub da_dq: DMatrix<f64>,
    pub da_dv: DMatrix<f64>,
    pub dlambda_dq: DMatrix<f64>,
    pub dlambda_dv: DMatrix<f64>,
}

/// Jacobian of `(A, λ)` with respect to `q` and `v`, given `(A, λ)` at `(q, v)`.
///
/// Every column solves the same multiplier system, so the factorization is
/// computed once and reused for all `2N` right-hand sides.
pub fn el_field_jacobian(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    accel: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<FieldJacobian> {
    let fact = field_factorization(spec, q)?;
    el_field_jacobian_with(spec, &fact, q, v, accel, lambda)
}

fn el_field_jacobian_with(
    spec: &dyn ProblemSpec,
    fact: &SaddleFactorization,
    q: &DVector<f64>,
    v: &DVector<f64>,
    accel: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<FieldJacobian> {
    let n = q.len();
    let d = spec.n_constraints();
    let dm = spec.d_mass(q);
    let d2m = spec.d2_mass(q);
    let d2a = spec.d2_one_form(q);
    let d2v = spec.d2_potential(q);
    let gamma = christoffel_from(&dm);
    let b = magnetic(spec, q);
    let d2g_v = spec.d2_constraint_contract(q, v);
    let d2g_a = spec.d2_constraint_contract(q, accel);
    let d3g_vv = spec.d3_constraint_contract(q, v, v);

    let hess_lambda = constraint_hessian(spec, q, lambda);

    // Filled entry by entry: this runs for every stage of every jet.
    let mut top = DMatrix::zeros(n, 2 * n);
    let mut bottom = DMatrix::zeros(d, 2 * n);
    for m in 0..n {
        for i in 0..n {
            // ∂ₘ(Γ_ikl vᵏvˡ) = (Σ_l vˡ ∂ₗ∂ₘM v)_i − ½ vᵀ ∂ᵢ∂ₘM v
            let mut dgvv = 0.0;
            for l in 0..n {
                let (lm, im) = (&d2m[l][m], &d2m[i][m]);
                for k in 0..n {
                    dgvv += v[l] * lm[(i, k)] * v[k] - 0.5 * v[l] * im[(l, k)] * v[k];
                }
            }
            // ∂ₘ(b v)_i
            let mut db_v = 0.0;
            for j in 0..n {
                db_v += (d2a[m][(i, j)] - d2a[m][(j, i)]) * v[j];
            }
            let mut dm_accel = 0.0;
            for j in 0..n {
                dm_accel += dm[m][(i, j)] * accel[j];
            }
            top[(i, m)] = -dgvv - db_v - d2v[(i, m)] - dm_accel + hess_lambda[(i, m)];

            // v-derivatives: −2Γ_ikm vᵏ − b_im
            let mut gv = 0.0;
            for k in 0..n {
                gv += gamma[(i, k, m)] * v[k];
            }
            top[(i, n + m)] = -2.0 * gv - b[(i, m)];
        }
        for a in 0..d {
            bottom[(a, m)] = d3g_vv[(a, m)] + d2g_a[(a, m)];
            bottom[(a, n + m)] = 2.0 * d2g_v[(a, m)];
        }
    }
    let (x, y) = fact.solve_many(&top, &bottom)?;
    Ok(FieldJacobian {
        da_dq: x.columns(0, n).into_owned(),
        da_dv: x.columns(n, n).into_owned(),
        dlambda_dq: y.columns(0, n).into_owned(),
        dlambda_dv: y.columns(n, n).into_owned(),
    })
}

/// Everything the standard layer needs from one field evaluation.
#[derive(Debug, Clone)]
pub(crate) struct FieldPoint {
    pub accel: DVector<f64>,
    pub lagrangian: f64,
    pub jac: Option<FieldJacobian>,
    pub dql: Option<(DVector<f64>, DVector<f64>)>,
}

pub(crate) fn field_point(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    v: &DVector<f64>,
    with_derivatives: bool,
) -> Result<FieldPoint> {
    let fact = field_factorization(spec, q)?;
    let (accel, lambda) = el_field_with(spec, &fact, q, v)?;
    let lagrangian = lagrangian(spec, q, v);
    if !with_derivatives {
        return Ok(FieldPoint {
            accel,
            lagrangian,
            jac: None,
            dql: None,
        });
    }
    let jac = el_field_jacobian_with(spec, &fact, q, v, &accel, &lambda)?;
    Ok(FieldPoint {
        accel,
        lagrangian,
        jac: Some(jac),
        dql: Some(d_lagrangian(spec, q, v)),
    })
}

/// `w ∈ TQ` to within `tol`: `‖g(q)‖∞ ≤ tol` and `‖Dg(q) v‖∞ ≤ tol`.
pub fn tq_membership(spec: &dyn ProblemSpec, w: &State, tol: f64) -> bool {
    let (g, gv) = constraint_violation(spec, w);
    g <= tol && gv <= tol
}

/// `(‖g(q)‖∞, ‖Dg(q) v‖∞)`.
pub fn constraint_violation(spec: &dyn ProblemSpec, w: &State) -> (f64, f64) {
    let g = spec.constraint(&w.q).amax();
    let gv = (spec.d_constraint(&w.q) * &w.v).amax();
    (g, gv)
}

/// `δw ∈ T_w TTQ`: `Dg δq = 0` and `vᵀD²g δq + Dg δv = 0`, to within `tol`.
pub fn ttq_membership(spec: &dyn ProblemSpec, w: &State, dw: &TangentVector, tol: f64) -> bool {
    let c = ttq_constraint_matrix(spec, w);
    (c * dw.to_vector()).amax() <= tol
}

/// The `2d×2N` matrix `[[Dg, 0], [vᵀD²g, Dg]]` whose kernel is `T_w TTQ`.
pub fn ttq_constraint_matrix(spec: &dyn ProblemSpec, w: &State) -> DMatrix<f64> {
    let n = w.dim();
    let d = spec.n_constraints();
    let g = spec.d_constraint(&w.q);
    let c = spec.d2_constraint_contract(&w.q, &w.v);
    let mut m = DMatrix::zeros(2 * d, 2 * n);
    m.view_mut((0, 0), (d, n)).copy_from(&g);
    m.view_mut((d, 0), (d, n)).copy_from(&c);
    m.view_mut((d, n), (d, n)).copy_from(&g);
    m
}

/// Worst relative error of each user-supplied derivative against central
/// differences of the next-lower quantity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DerivativeReport {
    pub d_mass: f64,
    pub d2_mass: f64,
    pub d_one_form: f64,
    pub d2_one_form: f64,
    pub d_potential: f64,
    pub d2_potential: f64,
    pub d_constraint: f64,
    pub d2_constraint: f64,
    pub d3_constraint: f64,
}

impl DerivativeReport {
    pub fn worst(&self) -> f64 {
        [
            self.d_mass,
            self.d2_mass,
            self.d_one_form,
            self.d2_one_form,
            self.d_potential,
            self.d2_potential,
            self.d_constraint,
            self.d2_constraint,
            self.d3_constraint,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Compare every user derivative with central differences at step `step`.
///
/// `u` and `w` are the contraction directions used for the `D²g` and `D³g`
/// checks.
pub fn check_derivatives(
    spec: &dyn ProblemSpec,
    q: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    step: f64,
) -> DerivativeReport {
    let n = q.len();
    let unit = |k: usize| {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        e
    };
    let mut r = DerivativeReport::default();

    let dm = spec.d_mass(q);
    let d2m = spec.d2_mass(q);
    for k in 0..n {
        let num = fd::matrix_directional(|x| spec.mass(x), q, &unit(k), step);
        r.d_mass = r.d_mass.max(fd::relative_error(&dm[k], &num));
        for l in 0..n {
            let num = fd::matrix_directional(|x| spec.d_mass(x)[k].clone(), q, &unit(l), step);
            r.d2_mass = r.d2_mass.max(fd::relative_error(&d2m[k][l], &num));
        }
    }

    let da = spec.d_one_form(q);
    let num = fd::jacobian(|x| spec.one_form(x), q, step);
    r.d_one_form = fd::relative_error(&da, &num);
    let d2a = spec.d2_one_form(q);
    for k in 0..n {
        let num = fd::matrix_directional(|x| spec.d_one_form(x), q, &unit(k), step);
        r.d2_one_form = r.d2_one_form.max(fd::relative_error(&d2a[k], &num));
    }

    let grad = spec.d_potential(q);
    let num = fd::jacobian(|x| DVector::from_element(1, spec.potential(x)), q, step);
    r.d_potential = fd::relative_error(&DMatrix::from_row_slice(1, n, grad.as_slice()), &num);
    let num = fd::jacobian(|x| spec.d_potential(x), q, step);
    r.d2_potential = fd::relative_error(&spec.d2_potential(q), &num);

    let num = fd::jacobian(|x| spec.constraint(x), q, step);
    r.d_constraint = fd::relative_error(&spec.d_constraint(q), &num);
    let num = fd::matrix_directional(|x| spec.d_constraint(x), q, u, step);
    r.d2_constraint = fd::relative_error(&spec.d2_constraint_contract(q, u), &num);
    let num = fd::matrix_directional(|x| spec.d2_constraint_contract(x, u), q, w, step);
    r.d3_constraint = fd::relative_error(&spec.d3_constraint_contract(q, u, w), &num);
    r
}

/// Reject states whose dimensions do not match the problem.
pub(crate) fn check_state(spec: &dyn ProblemSpec, w: &State) -> Result<()> {
    if w.q.len() != spec.dim() || w.v.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: w.q.len().max(w.v.len()),
            context: "state dimension",
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Circle, SpherePendulum};
    use approx::assert_abs_diff_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    /// N = 2, m = diag(1, q₁²), a = (−q₂, 0), g = q₂ (linear).
    struct PolarLike;

    impl ProblemSpec for PolarLike {
        fn dim(&self) -> usize {
            2
        }
        fn n_constraints(&self) -> usize {
            1
        }
        fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal(&v(&[1.0, q[0] * q[0]]))
        }
        fn d_mass(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
            vec![
                DMatrix::from_diagonal(&v(&[0.0, 2.0 * q[0]])),
                DMatrix::zeros(2, 2),
            ]
        }
        fn one_form(&self, q: &DVector<f64>) -> DVector<f64> {
            v(&[-q[1], 0.0])
        }
        fn d_one_form(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0])
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
            v(&[q[1]])
        }
        fn d_constraint(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0])
        }
        fn d2_constraint_contract(&self, _q: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 2)
        }
    }

    #[test]
    fn lagrangian_values() {
        assert_abs_diff_eq!(lagrangian(&Circle, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])), 0.5);
        let sp = SpherePendulum;
        assert_abs_diff_eq!(
            lagrangian(&sp, &v(&[0.0, 0.0, 1.0]), &v(&[1.0, 0.0, 0.0])),
            -0.5
        );
        // m = I at q₁ = 1, and a·v = 0 on q₂ = 0
        assert_abs_diff_eq!(lagrangian(&PolarLike, &v(&[1.0, 0.0]), &v(&[1.0, 1.0])), 1.0);
    }

    #[test]
    fn lagrangian_gradients() {
        let (dq, dv) = d_lagrangian(&Circle, &v(&[1.0, 0.0]), &v(&[0.0, 1.0]));
        assert_abs_diff_eq!(dq, v(&[0.0, 0.0]));
        assert_abs_diff_eq!(dv, v(&[0.0, 1.0]));
        let (dq, dv) = d_lagrangian(&SpherePendulum, &v(&[0.0, 0.0, 1.0]), &v(&[1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(dq, v(&[0.0, 0.0, -1.0]));
        assert_abs_diff_eq!(dv, v(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn christoffel_of_polar_metric() {
        let q = v(&[1.5, 0.0]);
        let g = christoffel(&PolarLike, &q);
        for i in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let expected = match (i, k, l) {
                        (0, 1, 1) => -1.5,
                        (1, 0, 1) | (1, 1, 0) => 1.5,
                        _ => 0.0,
                    };
                    assert_abs_diff_eq!(g[(i, k, l)], expected, epsilon = 1e-15);
                }
            }
        }
        assert_eq!(christoffel(&Circle, &v(&[1.0, 0.0])).max_abs(), 0.0);
    }

    #[test]
    fn magnetic_of_linear_one_form() {
        let b = magnetic(&PolarLike, &v(&[0.3, 0.1]));
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert_eq!(magnetic(&Circle, &v(&[1.0, 0.0])), DMatrix::zeros(2, 2));
    }

    #[test]
    fn field_on_circle_and_pole() {
        let (a, l) = el_field(&Circle, &v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(a, v(&[-1.0, 0.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(l, v(&[-0.5]), epsilon = 1e-15);
        let (a, l) = el_field(&SpherePendulum, &v(&[0.0, 0.0, 1.0]), &v(&[1.0, 0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(a, v(&[0.0, 0.0, -1.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(l, v(&[0.0]), epsilon = 1e-15);
    }

    #[test]
    fn membership() {
        let w = State::from_slices(&[1.0, 0.0], &[0.0, 1.0]);
        assert!(tq_membership(&Circle, &w, 1e-12));
        assert!(!tq_membership(&Circle, &State::from_slices(&[1.0, 0.0], &[1.0, 0.0]), 1e-12));
        let dw = TangentVector::new(v(&[0.0, 1.0]), v(&[-1.0, 0.0]));
        assert!(ttq_membership(&Circle, &w, &dw, 1e-12));
        let bad = TangentVector::new(v(&[0.0, 1.0]), v(&[0.0, 0.0]));
        assert!(!ttq_membership(&Circle, &w, &bad, 1e-12));
    }

    #[test]
    fn fallback_derivatives_are_close() {
        let q = v(&[0.4, -0.2]);
        let d2m = PolarLike.d2_mass(&q);
        assert_abs_diff_eq!(d2m[0][0][(1, 1)], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(d2m[1][0].amax(), 0.0, epsilon = 1e-8);
    }
}
