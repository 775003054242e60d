//! Geometric diagnostics of the symplectic layer.
//!
//! The projected boundary maps `∂± = ℙ∘∂̂±` split the tangent space of the
//! constrained phase space as `T_w TTQ = ker D∂⁻ ⊕ ker D∂⁺`. With
//! `δw = δw⁺ + δw⁻` (`δw⁺ ∈ ker D∂⁻`, `δw⁻ ∈ ker D∂⁺`), the discrete
//! Lagrange one-form is `θ⁻(w)δw = −DL_h(w)δw⁻`, the two-form is
//! `ω = −dθ⁻`, and a symmetry generator `ξ` gives the discrete momentum
//! `J_ξ(w) = −θ⁻(w)·ξw`.

use nalgebra::{DMatrix, DVector};

use crate::boundary::{self, BoundaryData};
use crate::del_solver::{self, StepConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, ProblemSpec, State, TangentVector};
use crate::saddle::{Orientation, SaddleSystem};

/// Linear infinitesimal generators `q ↦ Ξq` of a symmetry group, lifted to
/// `(q, v) ↦ (Ξq, Ξv)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupActionSpec {
    names: Vec<String>,
    generators: Vec<DMatrix<f64>>,
}

impl GroupActionSpec {
    pub fn new(generators: Vec<(&str, DMatrix<f64>)>) -> Self {
        let (names, generators) = generators.into_iter().map(|(n, g)| (n.to_string(), g)).unzip();
        Self { names, generators }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn generator(&self, index: usize) -> &DMatrix<f64> {
        &self.generators[index]
    }

    /// `ξw = (Ξq, Ξv)`.
    pub fn lift(&self, index: usize, w: &State) -> TangentVector {
        let g = &self.generators[index];
        TangentVector::new(g * &w.q, g * &w.v)
    }

    /// `exp(εΞ)·w`.
    pub fn act(&self, index: usize, epsilon: f64, w: &State) -> State {
        let r = (&self.generators[index] * epsilon).exp();
        State::new(&r * &w.q, &r * &w.v)
    }
}

/// Relative tolerance for the numerical null spaces below.
const NULL_TOL: f64 = 1e-10;

/// Orthonormal basis (as columns of a `2N×2(N−d)` matrix) of `T_w TTQ`.
pub fn ttq_basis(spec: &dyn ProblemSpec, w: &State) -> Result<DMatrix<f64>> {
    let n = spec.dim();
    let d = spec.n_constraints();
    let basis = linalg::null_space(&model::ttq_constraint_matrix(spec, w), NULL_TOL);
    if basis.ncols() != 2 * (n - d) {
        return Err(Error::RankLoss {
            context: "tangent space of the constrained phase space",
            expected: 2 * (n - d),
            found: basis.ncols(),
        });
    }
    Ok(basis)
}

/// `D∂∓ = Dℙ(∂̂∓)·D∂̂∓`, both `N×2N`, with the boundary data they came from.
pub struct ProjectedDerivatives {
    pub boundary: BoundaryData,
    pub d_minus: DMatrix<f64>,
    pub d_plus: DMatrix<f64>,
}

pub fn projected_derivatives(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w: &State,
) -> Result<ProjectedDerivatives> {
    let bd = boundary::boundary_data(&config.layer, spec, w, config.h, config.bias)?;
    let (qm, tm) = boundary::project_default(spec, &bd.hat_minus, &bd.hat_minus)?;
    let (qp, tp) = boundary::project_default(spec, &bd.hat_plus, &bd.hat_plus)?;
    let d_minus = boundary::dproject_columns(spec, &qm, &tm, &bd.d_hat_minus)?;
    let d_plus = boundary::dproject_columns(spec, &qp, &tp, &bd.d_hat_plus)?;
    Ok(ProjectedDerivatives {
        boundary: bd,
        d_minus,
        d_plus,
    })
}

/// The splitting of `T_w TTQ` by the boundary maps.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationBasis {
    pub state: State,
    /// Orthonormal basis of `T_w TTQ`, `2N×2(N−d)`.
    pub ttq: DMatrix<f64>,
    /// Orthonormal basis of `ker D∂⁻ ∩ T_w TTQ` (the `δw⁺` space), `2N×(N−d)`.
    pub plus: DMatrix<f64>,
    /// Orthonormal basis of `ker D∂⁺ ∩ T_w TTQ` (the `δw⁻` space), `2N×(N−d)`.
    pub minus: DMatrix<f64>,
    /// `DL_h(w)`, length `2N`.
    pub d_lh: DVector<f64>,
}

impl VariationBasis {
    /// `(δw⁺, δw⁻)` with `δw = δw⁺ + δw⁻`, by least squares on the joint basis.
    pub fn split(&self, dw: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let k = self.plus.ncols();
        let joint = self.joint();
        let coeffs = linalg::least_squares(&joint, dw);
        let plus = &self.plus * coeffs.rows(0, k);
        let minus = &self.minus * coeffs.rows(k, k);
        (plus, minus)
    }

    fn joint(&self) -> DMatrix<f64> {
        let (rows, k) = self.plus.shape();
        let mut joint = DMatrix::zeros(rows, 2 * k);
        joint.columns_mut(0, k).copy_from(&self.plus);
        joint.columns_mut(k, k).copy_from(&self.minus);
        joint
    }

    /// Numerical rank of the joint sub-bases.
    pub fn joint_rank(&self, tol: f64) -> usize {
        self.joint().rank(tol)
    }

    /// `θ⁻(w)` as a covector on `ℝ²ᴺ`, valid on `T_w TTQ`.
    pub fn one_form_covector(&self) -> DVector<f64> {
        let k = self.plus.ncols();
        let joint = self.joint();
        let pinv = joint
            .pseudo_inverse(1e-12)
            .expect("pseudo-inverse with nonnegative tolerance");
        let minus_rows = pinv.rows(k, k);
        // θ⁻δw = −DL_h · B⁻ · (B⁻ coefficients of δw)
        -(minus_rows.transpose() * (self.minus.transpose() * &self.d_lh))
    }
}

pub fn variation_basis(spec: &dyn ProblemSpec, config: &StepConfig, w: &State) -> Result<VariationBasis> {
    let n = spec.dim();
    let d = spec.n_constraints();
    let ttq = ttq_basis(spec, w)?;
    let pd = projected_derivatives(spec, config, w)?;
    let sub = |dmap: &DMatrix<f64>, context: &'static str| -> Result<DMatrix<f64>> {
        let k = linalg::null_space(&(dmap * &ttq), NULL_TOL);
        if k.ncols() != n - d {
            return Err(Error::RankLoss {
                context,
                expected: n - d,
                found: k.ncols(),
            });
        }
        Ok(linalg::orthonormalize(&(&ttq * k)))
    };
    let plus = sub(&pd.d_minus, "kernel of the backward boundary map")?;
    let minus = sub(&pd.d_plus, "kernel of the forward boundary map")?;
    Ok(VariationBasis {
        state: w.clone(),
        ttq,
        plus,
        minus,
        d_lh: pd.boundary.d_lh,
    })
}

/// `θ⁻(w)δw = −DL_h(w)δw⁻`.
pub fn one_form(spec: &dyn ProblemSpec, config: &StepConfig, w: &State, dw: &TangentVector) -> Result<f64> {
    let basis = variation_basis(spec, config, w)?;
    let (_, minus) = basis.split(&dw.to_vector());
    Ok(-basis.d_lh.dot(&minus))
}

/// Chart of the constrained phase space around `w`: `c ↦ (q′, v′)` with
/// `q′ = ℙ(q + E_q c)` and `v′` the tangential projection of `v + E_v c`
/// at `q′`, where `E = [E_q; E_v]` is the orthonormal `T_w TTQ` basis.
struct Chart<'a> {
    spec: &'a dyn ProblemSpec,
    base: State,
    basis: DMatrix<f64>,
}

impl<'a> Chart<'a> {
    fn new(spec: &'a dyn ProblemSpec, w: &State) -> Result<Self> {
        Ok(Self {
            spec,
            base: w.clone(),
            basis: ttq_basis(spec, w)?,
        })
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn point(&self, c: &DVector<f64>) -> Result<State> {
        let n = self.spec.dim();
        let shift = &self.basis * c;
        let q_in = &self.base.q + shift.rows(0, n);
        let (q, _) = boundary::project_default(self.spec, &q_in, &self.base.q)?;
        let v = boundary::tangent_velocity(self.spec, &q, &(&self.base.v + shift.rows(n, n)))?;
        Ok(State::new(q, v))
    }

    /// The point at `c` and the pushforward of every coordinate direction (`2N×dim`).
    fn point_and_frame(&self, c: &DVector<f64>) -> Result<(State, DMatrix<f64>)> {
        let spec = self.spec;
        let n = spec.dim();
        let d = spec.n_constraints();
        let shift = &self.basis * c;
        let q_in = &self.base.q + shift.rows(0, n);
        let (q, theta) = boundary::project_default(spec, &q_in, &self.base.q)?;
        let u = &self.base.v + shift.rows(n, n);
        let g = spec.d_constraint(&q);
        let kkt = SaddleSystem::new(DMatrix::identity(n, n), g, Orientation::Positive)?.factor()?;
        let (v, eta) = kkt.solve(&u, &DVector::zeros(d))?;
        let dq = boundary::dproject_columns(spec, &q, &theta, &self.basis.rows(0, n).into_owned())?;
        let curvature_v = spec.d2_constraint_contract(&q, &v);
        let mut frame = DMatrix::zeros(2 * n, self.dim());
        for i in 0..self.dim() {
            let dqi = dq.column(i).into_owned();
            let top = self.basis.view((n, i), (n, 1)) - spec.d2_constraint_contract(&q, &dqi).tr_mul(&eta);
            let bottom = -(&curvature_v * &dqi);
            let (dvi, _) = kkt.solve(&top.column(0).into_owned(), &bottom)?;
            frame.view_mut((0, i), (n, 1)).copy_from(&dqi);
            frame.view_mut((n, i), (n, 1)).copy_from(&dvi);
        }
        Ok((State::new(q, v), frame))
    }

    /// `θ⁻` pulled back to chart coordinates at `c`.
    fn pulled_back_one_form(&self, config: &StepConfig, c: &DVector<f64>) -> Result<DVector<f64>> {
        let (w, frame) = self.point_and_frame(c)?;
        let basis = variation_basis(self.spec, config, &w)?;
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let (_, minus) = basis.split(&frame.column(i).into_owned());
            out[i] = -basis.d_lh.dot(&minus);
        }
        Ok(out)
    }
}

/// `ω = −dθ⁻` at one state, in the coordinates of an orthonormal `T_w TTQ` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoForm {
    /// Orthonormal `T_w TTQ` basis, `2N×2(N−d)`.
    pub basis: DMatrix<f64>,
    /// `Ω_ij = ω(E_i, E_j)`, antisymmetric.
    pub matrix: DMatrix<f64>,
}

impl TwoForm {
    /// `ω(δ₁, δ₂)` for `δ₁, δ₂ ∈ T_w TTQ`.
    pub fn eval(&self, d1: &DVector<f64>, d2: &DVector<f64>) -> f64 {
        let a = self.basis.tr_mul(d1);
        let b = self.basis.tr_mul(d2);
        a.dot(&(&self.matrix * b))
    }
}

/// Default step for the numerical exterior derivative.
pub const TWO_FORM_FD_STEP: f64 = 1e-5;

/// Numerical `ω = −dθ⁻` at `w`, by central differences of the pulled-back
/// one-form in the chart around `w`.
pub fn two_form_matrix(spec: &dyn ProblemSpec, config: &StepConfig, w: &State, fd_step: f64) -> Result<TwoForm> {
    let chart = Chart::new(spec, w)?;
    let m = chart.dim();
    // derivs.column(i) = ∂Θ/∂cᵢ
    let mut derivs = DMatrix::zeros(m, m);
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = fd_step;
        let plus = chart.pulled_back_one_form(config, &e)?;
        let minus = chart.pulled_back_one_form(config, &-e)?;
        derivs.set_column(i, &((plus - minus) / (2.0 * fd_step)));
    }
    // dΘ(eᵢ, eⱼ) = ∂ᵢΘⱼ − ∂ⱼΘᵢ
    let d_theta = derivs.transpose() - &derivs;
    Ok(TwoForm {
        basis: chart.basis,
        matrix: -d_theta,
    })
}

/// `ω(δ₁, δ₂)` at `w`.
pub fn two_form(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w: &State,
    d1: &TangentVector,
    d2: &TangentVector,
    fd_step: f64,
) -> Result<f64> {
    Ok(two_form_matrix(spec, config, w, fd_step)?.eval(&d1.to_vector(), &d2.to_vector()))
}

/// `max |ω_{w₂}(DF δᵢ, DF δⱼ) − ω_{w₁}(δᵢ, δⱼ)|` over a `T_{w₁}TTQ` basis,
/// for the map `F` (`DF` by central differences through the chart at `w₁`).
pub fn symplecticity_defect_of_map<F>(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w1: &State,
    map: F,
    fd_step: f64,
) -> Result<f64>
where
    F: Fn(&State) -> Result<State>,
{
    let chart = Chart::new(spec, w1)?;
    let m = chart.dim();
    let w2 = map(w1)?;
    let omega1 = two_form_matrix(spec, config, w1, fd_step)?;
    let omega2 = two_form_matrix(spec, config, &w2, fd_step)?;
    let mut jac = DMatrix::zeros(2 * spec.dim(), m);
    for i in 0..m {
        let mut e = DVector::zeros(m);
        e[i] = fd_step;
        let plus = map(&chart.point(&e)?)?.to_vector();
        let minus = map(&chart.point(&-e)?)?.to_vector();
        jac.set_column(i, &((plus - minus) / (2.0 * fd_step)));
    }
    // Coordinates of the image directions in the orthonormal basis at w₂.
    let image = omega2.basis.tr_mul(&jac);
    let pulled = image.transpose() * &omega2.matrix * &image;
    Ok((pulled - &omega1.matrix).amax())
}

/// [`symplecticity_defect_of_map`] for one step of the symplectic layer.
pub fn symplecticity_defect(spec: &dyn ProblemSpec, config: &StepConfig, w1: &State, fd_step: f64) -> Result<f64> {
    symplecticity_defect_of_map(
        spec,
        config,
        w1,
        |w| del_solver::step(spec, config, w).map(|(w2, _)| w2),
        fd_step,
    )
}

/// Tolerance on `|Dg(q) Ξq|` for a generator to count as tangent.
pub const GENERATOR_TOL: f64 = 1e-8;

/// Discrete momentum `J_ξ(w) = −θ⁻(w)·ξw`.
pub fn discrete_momentum(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w: &State,
    action: &GroupActionSpec,
    index: usize,
) -> Result<f64> {
    let xi = action.lift(index, w);
    let violation = (spec.d_constraint(&w.q) * &xi.dq).amax();
    if violation > GENERATOR_TOL {
        return Err(Error::GeneratorNotTangent { violation });
    }
    Ok(-one_form(spec, config, w, &xi)?)
}

/// Continuous Noether momentum `D_vL(w)·Ξq`, reported alongside [`discrete_momentum`].
pub fn noether_momentum(spec: &dyn ProblemSpec, w: &State, action: &GroupActionSpec, index: usize) -> f64 {
    let (_, dvl) = model::d_lagrangian(spec, &w.q, &w.v);
    dvl.dot(&(action.generator(index) * &w.q))
}

/// `max ‖∂±(exp(εξ)·w) − exp(εξ)·∂±(w)‖∞`.
pub fn equivariance_defect(
    spec: &dyn ProblemSpec,
    config: &StepConfig,
    w: &State,
    action: &GroupActionSpec,
    index: usize,
    epsilon: f64,
) -> Result<f64> {
    let ends = |w: &State| -> Result<(DVector<f64>, DVector<f64>)> {
        let b = boundary::boundary_values(&config.layer, spec, w, config.h, config.bias)?;
        let (m, _) = boundary::project_default(spec, &b.hat_minus, &b.hat_minus)?;
        let (p, _) = boundary::project_default(spec, &b.hat_plus, &b.hat_plus)?;
        Ok((m, p))
    };
    let (m0, p0) = ends(w)?;
    let (m1, p1) = ends(&action.act(index, epsilon, w))?;
    let r = (action.generator(index) * epsilon).exp();
    Ok((m1 - &r * m0).amax().max((p1 - &r * p0).amax()))
}

/// Multiplier-free check that `(w₁, w₂)` solves the discrete Euler–Lagrange
/// equations.
///
/// For each `δw₁` in the `ker D∂⁻(w₁)` basis, finds `δw₂ ∈ ker D∂⁺(w₂) ∩ TTQ`
/// with `D∂⁻(w₂)δw₂ = D∂⁺(w₁)δw₁` and measures
/// `|DL_h(w₁)δw₁ + DL_h(w₂)δw₂| / ‖DL_h‖`. Returns the worst of that, the
/// matching-condition residual, and `‖∂⁺(w₁) − ∂⁻(w₂)‖∞`.
pub fn del_residual_check(spec: &dyn ProblemSpec, config: &StepConfig, w1: &State, w2: &State) -> Result<f64> {
    let b1 = variation_basis(spec, config, w1)?;
    let b2 = variation_basis(spec, config, w2)?;
    let pd1 = projected_derivatives(spec, config, w1)?;
    let pd2 = projected_derivatives(spec, config, w2)?;

    let (p1, _) = boundary::project_default(spec, &pd1.boundary.hat_plus, &pd1.boundary.hat_plus)?;
    let (m2, _) = boundary::project_default(spec, &pd2.boundary.hat_minus, &pd2.boundary.hat_minus)?;
    let mut worst = (p1 - m2).amax();

    let scale = b1.d_lh.amax().max(b2.d_lh.amax()).max(f64::MIN_POSITIVE);
    let targets = &pd1.d_plus * &b1.plus;
    let image = &pd2.d_minus * &b2.minus;
    for i in 0..b1.plus.ncols() {
        let t = targets.column(i).into_owned();
        let c = linalg::least_squares(&image, &t);
        let matching = (&image * &c - &t).amax() / t.amax().max(1.0);
        let dw2 = &b2.minus * c;
        let stationarity = (b1.d_lh.dot(&b1.plus.column(i)) + b2.d_lh.dot(&dw2)).abs() / scale;
        worst = worst.max(matching).max(stationarity);
    }
    Ok(worst)
}

/// `E = ½vᵀm(q)v + V(q)`.
pub fn energy(spec: &dyn ProblemSpec, w: &State) -> f64 {
    0.5 * w.v.dot(&(spec.mass(&w.q) * &w.v)) + spec.potential(&w.q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Circle, SpherePendulum};
    use crate::standard_layer::ButcherTableau;
    use approx::assert_abs_diff_eq;

    #[test]
    fn energy_examples() {
        let sp = SpherePendulum;
        assert_abs_diff_eq!(energy(&sp, &State::from_slices(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0])), 1.5);
        assert_abs_diff_eq!(energy(&sp, &State::from_slices(&[0.0, 0.0, -1.0], &[0.0; 3])), -1.0);
    }

    #[test]
    fn sub_basis_dimensions() {
        let cfg = StepConfig::new(0.05);
        let w = State::from_slices(&[1.0, 0.0], &[0.0, 1.0]);
        let b = variation_basis(&Circle, &cfg, &w).unwrap();
        assert_eq!((b.plus.ncols(), b.minus.ncols()), (1, 1));
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        let b = variation_basis(&SpherePendulum, &cfg, &w).unwrap();
        assert_eq!((b.plus.ncols(), b.minus.ncols()), (2, 2));
        assert_eq!(b.joint_rank(1e-8), 4);
    }

    #[test]
    fn plus_basis_has_no_position_part_for_zero_bias() {
        let cfg = StepConfig::new(0.05);
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        let b = variation_basis(&SpherePendulum, &cfg, &w).unwrap();
        assert!(b.plus.rows(0, 3).amax() < 1e-12);
    }

    #[test]
    fn one_form_vanishes_on_plus_space_and_is_linear() {
        let cfg = StepConfig::new(0.05).with_bias(crate::boundary::Bias::symmetric());
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        let b = variation_basis(&SpherePendulum, &cfg, &w).unwrap();
        for i in 0..b.plus.ncols() {
            let dw = TangentVector::from_vector(&b.plus.column(i).into_owned());
            assert!(one_form(&SpherePendulum, &cfg, &w, &dw).unwrap().abs() < 1e-12);
        }
        let d1 = b.ttq.column(0).into_owned();
        let d2 = b.ttq.column(3).into_owned();
        let f = |x: &DVector<f64>| one_form(&SpherePendulum, &cfg, &w, &TangentVector::from_vector(x)).unwrap();
        let combined = f(&(&d1 * 2.0 - &d2 * 0.5));
        assert_abs_diff_eq!(combined, 2.0 * f(&d1) - 0.5 * f(&d2), epsilon = 1e-10);
    }

    #[test]
    fn two_form_is_antisymmetric() {
        let cfg = StepConfig::new(0.05);
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        let om = two_form_matrix(&SpherePendulum, &cfg, &w, 1e-5).unwrap();
        let d1 = om.basis.column(0).into_owned();
        let d2 = om.basis.column(2).into_owned();
        assert!(om.eval(&d1, &d1).abs() < 1e-8);
        assert_abs_diff_eq!(om.eval(&d1, &d2), -om.eval(&d2, &d1), epsilon = 1e-8);
    }

    #[test]
    fn momentum_vanishes_at_rest_on_the_axis() {
        let p = crate::problems::by_name("sphere-pendulum").unwrap();
        let cfg = StepConfig::new(0.05);
        let action = p.symmetry.as_ref().unwrap();
        let rest = State::from_slices(&[0.0, 0.0, -1.0], &[0.0; 3]);
        let j = discrete_momentum(&SpherePendulum, &cfg, &rest, action, 0).unwrap();
        assert!(j.abs() < 1e-14);
    }

    #[test]
    fn non_tangent_generator_is_rejected() {
        let cfg = StepConfig::new(0.05);
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        // a dilation is not tangent to the sphere
        let dilation = GroupActionSpec::new(vec![("dilation", DMatrix::identity(3, 3))]);
        let err = discrete_momentum(&SpherePendulum, &cfg, &w, &dilation, 0).unwrap_err();
        assert!(matches!(err, Error::GeneratorNotTangent { .. }));
        // a rotation about the x-axis is tangent, even though V is not invariant under it
        let x_rotation = GroupActionSpec::new(vec![(
            "x-rotation",
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0]),
        )]);
        assert!(discrete_momentum(&SpherePendulum, &cfg, &w, &x_rotation, 0).is_ok());
    }

    fn circle_state() -> State {
        State::from_slices(&[0.6, 0.8], &[-0.8, 0.6])
    }

    /// Two tangent vectors of the circle's `TTQ` at [`circle_state`].
    fn circle_tangents() -> (DVector<f64>, DVector<f64>) {
        (
            DVector::from_vec(vec![-0.8, 0.6, -1.0, -0.5]),
            DVector::from_vec(vec![0.0, 0.0, -0.8, 0.6]),
        )
    }

    /// `log₂` of successive error ratios under h-halving.
    fn slopes(errors: &[f64]) -> Vec<f64> {
        errors.windows(2).map(|e| (e[0] / e[1]).abs().log2()).collect()
    }

    #[test]
    fn splitting_reconstructs_tangent_vectors() {
        let cfg = StepConfig::new(0.05).with_bias(crate::boundary::Bias::symmetric());
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        let b = variation_basis(&SpherePendulum, &cfg, &w).unwrap();
        let pd = projected_derivatives(&SpherePendulum, &cfg, &w).unwrap();
        assert!((&pd.d_minus * &b.plus).amax() < 1e-10);
        assert!((&pd.d_plus * &b.minus).amax() < 1e-10);
        for i in 0..b.ttq.ncols() {
            let dw = b.ttq.column(i).into_owned();
            assert!(model::ttq_membership(&SpherePendulum, &w, &TangentVector::from_vector(&dw), 1e-12));
            let (plus, minus) = b.split(&dw);
            assert!((plus + minus - dw).amax() < 1e-10);
        }
    }

    #[test]
    fn one_form_tends_to_momentum_pairing() {
        let w = circle_state();
        let (d1, _) = circle_tangents();
        let exact = w.v.dot(&d1.rows(0, 2));
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| one_form(&Circle, &StepConfig::new(h), &w, &TangentVector::from_vector(&d1)).unwrap() - exact)
            .collect();
        assert!(slopes(&errors).iter().all(|&s| s >= 1.0), "{errors:?}");
    }

    #[test]
    fn two_form_tends_to_canonical_form() {
        let w = circle_state();
        let (d1, d2) = circle_tangents();
        // dq ∧ dv with m = I
        let exact = d1.rows(0, 2).dot(&d2.rows(2, 2)) - d2.rows(0, 2).dot(&d1.rows(2, 2));
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| {
                let om = two_form_matrix(&Circle, &StepConfig::new(h), &w, TWO_FORM_FD_STEP).unwrap();
                om.eval(&d1, &d2) - exact
            })
            .collect();
        assert!(slopes(&errors).iter().all(|&s| s >= 1.0), "{errors:?}");
    }

    #[test]
    fn momentum_tends_to_angular_momentum() {
        let p = crate::problems::by_name("sphere-pendulum").unwrap();
        let action = p.symmetry.as_ref().unwrap();
        let w = &p.default_state;
        let lz = w.q[0] * w.v[1] - w.q[1] * w.v[0];
        assert_abs_diff_eq!(noether_momentum(&SpherePendulum, w, action, 0), lz, epsilon = 1e-15);
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| discrete_momentum(&SpherePendulum, &StepConfig::new(h), w, action, 0).unwrap() + lz)
            .collect();
        assert!(slopes(&errors).iter().all(|&s| s >= 1.0), "{errors:?}");
    }

    #[test]
    fn equilibrium_pair_passes_the_del_check() {
        let cfg = StepConfig::new(0.05);
        let rest = State::from_slices(&[0.0, 0.0, -1.0], &[0.0; 3]);
        assert!(del_residual_check(&SpherePendulum, &cfg, &rest, &rest).unwrap() <= 1e-10);
        assert!(symplecticity_defect(&SpherePendulum, &cfg, &rest, TWO_FORM_FD_STEP).unwrap() <= 1e-8);
    }

    #[test]
    fn del_check_separates_solutions_from_flows() {
        let w1 = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.0]);
        for tableau in [ButcherTableau::euler(), ButcherTableau::rk4()] {
            let cfg = StepConfig::new(0.1).with_tableau(tableau.clone());
            let (w2, _) = del_solver::step(&SpherePendulum, &cfg, &w1).unwrap();
            let solved = del_residual_check(&SpherePendulum, &cfg, &w1, &w2).unwrap();
            assert!(solved <= 1e-8);
            let flowed = crate::standard_layer::rk_flow(&tableau, &SpherePendulum, &w1, 0.1, 1).unwrap().state();
            let flowed = boundary::project_state(&SpherePendulum, &flowed).unwrap();
            let control = del_residual_check(&SpherePendulum, &cfg, &w1, &flowed).unwrap();
            // an order-r flow and the order-r variational step agree to O(h^{r+1})
            if tableau.order() == 1 {
                assert!(control >= 1e-4, "{control:e}");
            }
            assert!(control >= 1e6 * solved.max(1e-16), "{control:e} vs {solved:e}");
        }
    }

    #[test]
    fn equivariance_of_the_boundary_maps() {
        let p = crate::problems::by_name("magnetic-sphere").unwrap();
        let action = p.symmetry.as_ref().unwrap();
        let cfg = StepConfig::new(0.05);
        for eps in [1e-2, 1e-3] {
            let defect = equivariance_defect(p.spec.as_ref(), &cfg, &p.default_state, action, 0, eps).unwrap();
            assert!(defect <= eps * eps);
        }
    }

    #[test]
    fn energy_is_conserved_by_fine_flows() {
        let w = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.5, 0.5]);
        let w = boundary::project_state(&SpherePendulum, &w).unwrap();
        let e0 = energy(&SpherePendulum, &w);
        let drift = |substeps: usize| {
            let end = crate::standard_layer::rk_flow(&ButcherTableau::rk4(), &SpherePendulum, &w, 1.0, substeps)
                .unwrap()
                .state();
            (energy(&SpherePendulum, &end) - e0).abs()
        };
        let (coarse, fine) = (drift(10), drift(40));
        assert!(fine < coarse / 100.0 && fine < 1e-6);
    }
}
