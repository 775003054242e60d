//! Runge–Kutta integration of the extended system
//!
//! ```text
//! dq/dt = v,   dv/dt = A(q, v),   dS/dt = L(q, v),   S(0) = 0
//! ```
//!
//! together with its first variation. The sensitivity of an explicit RK map
//! is the same RK method applied to the variational equations, so the jet is
//! the exact derivative of the discrete map (not of the exact flow).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{self, ProblemSpec, State};

/// Coefficients of a Runge–Kutta method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    name: String,
    matrix: DMatrix<f64>,
    weights: DVector<f64>,
    nodes: DVector<f64>,
    order: usize,
}

/// Names accepted by [`ButcherTableau::by_name`].
pub const TABLEAU_NAMES: [&str; 4] = ["euler", "midpoint", "heun", "rk4"];

impl ButcherTableau {
    /// Build a tableau, checking `Σ bᵢ = 1` and the shapes.
    pub fn new(
        name: impl Into<String>,
        matrix: DMatrix<f64>,
        weights: DVector<f64>,
        nodes: DVector<f64>,
        order: usize,
    ) -> Result<Self> {
        let s = weights.len();
        if matrix.shape() != (s, s) || nodes.len() != s || s == 0 {
            return Err(Error::InvalidConfig(format!(
                "tableau shapes disagree: matrix {:?}, {} weights, {} nodes",
                matrix.shape(),
                s,
                nodes.len()
            )));
        }
        if (weights.sum() - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidConfig(format!(
                "tableau weights sum to {} instead of 1",
                weights.sum()
            )));
        }
        Ok(Self {
            name: name.into(),
            matrix,
            weights,
            nodes,
            order,
        })
    }

    pub fn euler() -> Self {
        Self::from_rows("euler", &[&[0.0]], &[1.0], 1)
    }

    pub fn midpoint() -> Self {
        Self::from_rows("midpoint", &[&[0.0, 0.0], &[0.5, 0.0]], &[0.0, 1.0], 2)
    }

    pub fn heun() -> Self {
        Self::from_rows("heun", &[&[0.0, 0.0], &[1.0, 0.0]], &[0.5, 0.5], 2)
    }

    pub fn rk4() -> Self {
        Self::from_rows(
            "rk4",
            &[
                &[0.0, 0.0, 0.0, 0.0],
                &[0.5, 0.0, 0.0, 0.0],
                &[0.0, 0.5, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            4,
        )
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(Self::euler()),
            "midpoint" => Ok(Self::midpoint()),
            "heun" => Ok(Self::heun()),
            "rk4" => Ok(Self::rk4()),
            other => Err(Error::InvalidConfig(format!(
                "unknown tableau {other:?} (expected one of {})",
                TABLEAU_NAMES.join(", ")
            ))),
        }
    }

    fn from_rows(name: &str, rows: &[&[f64]], weights: &[f64], order: usize) -> Self {
        let s = weights.len();
        let matrix = DMatrix::from_fn(s, s, |i, j| rows[i][j]);
        let nodes = DVector::from_fn(s, |i, _| rows[i].iter().sum());
        Self::new(name, matrix, DVector::from_column_slice(weights), nodes, order)
            .expect("built-in tableau is consistent")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.weights.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.nodes
    }

    /// Declared classical order.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Strictly lower-triangular stage matrix.
    pub fn is_explicit(&self) -> bool {
        let s = self.stages();
        (0..s).all(|i| (i..s).all(|j| self.matrix[(i, j)] == 0.0))
    }
}

/// `(q, v, S)` after integrating from `(q₀, v₀, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub s: f64,
}

impl ExtendedState {
    pub fn state(&self) -> State {
        State::new(self.q.clone(), self.v.clone())
    }
}

/// An [`ExtendedState`] with its derivative with respect to the initial `(q₀, v₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetState {
    pub state: ExtendedState,
    /// `∂(q, v)/∂(q₀, v₀)`, `2N×2N`.
    pub sensitivity: DMatrix<f64>,
    /// `∂S/∂(q₀, v₀)`, length `2N`.
    pub action_gradient: DVector<f64>,
}

impl JetState {
    /// Rows `0..N` of the sensitivity: `∂q/∂(q₀, v₀)`.
    pub fn dq(&self) -> DMatrix<f64> {
        let n = self.state.q.len();
        self.sensitivity.rows(0, n).into_owned()
    }
}

fn check_substeps(substeps: usize) -> Result<()> {
    if substeps == 0 {
        return Err(Error::InvalidConfig("substeps must be at least 1".into()));
    }
    Ok(())
}

fn check_tableau(tableau: &ButcherTableau) -> Result<()> {
    if !tableau.is_explicit() {
        return Err(Error::InvalidConfig(format!(
            "tableau {:?} is implicit; only explicit tableaux can drive the standard layer",
            tableau.name()
        )));
    }
    Ok(())
}

/// Integrate `(q, v, S)` over signed time `t` using `substeps` equal steps.
pub fn rk_flow(
    tableau: &ButcherTableau,
    spec: &dyn ProblemSpec,
    w: &State,
    t: f64,
    substeps: usize,
) -> Result<ExtendedState> {
    integrate(tableau, spec, w, t, substeps, false).map(|j| j.state)
}

/// [`rk_flow`] together with the exact derivative of the discrete map.
pub fn rk_flow_jet(
    tableau: &ButcherTableau,
    spec: &dyn ProblemSpec,
    w: &State,
    t: f64,
    substeps: usize,
) -> Result<JetState> {
    integrate(tableau, spec, w, t, substeps, true)
}

fn integrate(
    tableau: &ButcherTableau,
    spec: &dyn ProblemSpec,
    w: &State,
    t: f64,
    substeps: usize,
    with_jet: bool,
) -> Result<JetState> {
    check_substeps(substeps)?;
    check_tableau(tableau)?;
    model::check_state(spec, w)?;
    let n = w.dim();
    let mut q = w.q.clone();
    let mut v = w.v.clone();
    let mut s = 0.0;
    let mut sens = DMatrix::identity(2 * n, 2 * n);
    let mut ds = DVector::zeros(2 * n);
    if t == 0.0 {
        return Ok(JetState {
            state: ExtendedState { q, v, s },
            sensitivity: sens,
            action_gradient: ds,
        });
    }

    let tau = t / substeps as f64;
    let stages = tableau.stages();
    let a = tableau.matrix();
    let b = tableau.weights();
    for _ in 0..substeps {
        // Stage slopes for q, v, S and their sensitivities.
        let mut kq: Vec<DVector<f64>> = Vec::with_capacity(stages);
        let mut kv: Vec<DVector<f64>> = Vec::with_capacity(stages);
        let mut ks: Vec<f64> = Vec::with_capacity(stages);
        let mut dkq: Vec<DMatrix<f64>> = Vec::with_capacity(stages);
        let mut dkv: Vec<DMatrix<f64>> = Vec::with_capacity(stages);
        let mut dks: Vec<DVector<f64>> = Vec::with_capacity(stages);
        for i in 0..stages {
            let mut yq = q.clone();
            let mut yv = v.clone();
            for j in 0..i {
                let c = tau * a[(i, j)];
                if c != 0.0 {
                    yq += &kq[j] * c;
                    yv += &kv[j] * c;
                }
            }
            let point = model::field_point(spec, &yq, &yv, with_jet)?;
            if with_jet {
                let mut dyq = sens.rows(0, n).into_owned();
                let mut dyv = sens.rows(n, n).into_owned();
                for j in 0..i {
                    let c = tau * a[(i, j)];
                    if c != 0.0 {
                        dyq += &dkq[j] * c;
                        dyv += &dkv[j] * c;
                    }
                }
                let jac = point.jac.as_ref().expect("requested derivatives");
                let (dql, dvl) = point.dql.as_ref().expect("requested derivatives");
                dkv.push(&jac.da_dq * &dyq + &jac.da_dv * &dyv);
                dks.push(dyq.tr_mul(dql) + dyv.tr_mul(dvl));
                dkq.push(dyv);
            }
            kq.push(yv);
            kv.push(point.accel);
            ks.push(point.lagrangian);
        }
        for i in 0..stages {
            let c = tau * b[i];
            if c == 0.0 {
                continue;
            }
            q += &kq[i] * c;
            v += &kv[i] * c;
            s += ks[i] * c;
            if with_jet {
                let mut top = sens.rows_mut(0, n);
                top += &dkq[i] * c;
                let mut bottom = sens.rows_mut(n, n);
                bottom += &dkv[i] * c;
                ds += &dks[i] * c;
            }
        }
    }
    Ok(JetState {
        state: ExtendedState { q, v, s },
        sensitivity: sens,
        action_gradient: ds,
    })
}

/// Adjoint method: returns `w′` with `rk_flow(w′, −t) = w`, and `S′ = −S` of
/// that reverse flow.
///
/// Solved by Newton's method on `w′` seeded with `rk_flow(w, t)`. For explicit
/// Euler this is implicit Euler.
pub fn adjoint_flow(
    tableau: &ButcherTableau,
    spec: &dyn ProblemSpec,
    w: &State,
    t: f64,
    substeps: usize,
    tol: f64,
    max_iter: usize,
) -> Result<ExtendedState> {
    adjoint_flow_jet(tableau, spec, w, t, substeps, tol, max_iter).map(|j| j.state)
}

/// [`adjoint_flow`] together with its derivative, obtained by inverting the
/// reverse-flow jet at the solution.
pub fn adjoint_flow_jet(
    tableau: &ButcherTableau,
    spec: &dyn ProblemSpec,
    w: &State,
    t: f64,
    substeps: usize,
    tol: f64,
    max_iter: usize,
) -> Result<JetState> {
    check_substeps(substeps)?;
    model::check_state(spec, w)?;
    let n = w.dim();
    if t == 0.0 {
        return rk_flow_jet(tableau, spec, w, 0.0, substeps);
    }
    let target = w.to_vector();
    let mut x = rk_flow(tableau, spec, w, t, substeps)?.state().to_vector();
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        let jet = rk_flow_jet(tableau, spec, &State::from_vector(&x), -t, substeps)?;
        let image = jet.state.state().to_vector();
        let r = &image - &target;
        let res = r.amax();
        let lu = jet.sensitivity.clone().full_piv_lu();
        let Some(inv) = lu.try_inverse() else {
            return Err(Error::singular("reverse-flow Jacobian in the adjoint solve"));
        };
        let scale = target.amax().max(1.0);
        // Accept once the residual is at tolerance, or has stalled at the
        // rounding floor just above it.
        if res <= tol * scale || (res <= 1e3 * tol * scale && res >= last) {
            let action_gradient = -(jet.action_gradient.transpose() * &inv).transpose();
            return Ok(JetState {
                state: ExtendedState {
                    q: x.rows(0, n).into_owned(),
                    v: x.rows(n, n).into_owned(),
                    s: -jet.state.s,
                },
                sensitivity: inv,
                action_gradient,
            });
        }
        last = res;
        x -= inv * r;
    }
    Err(Error::NonConvergence {
        what: "adjoint flow",
        iterations: max_iter,
        residual: last,
    })
}

/// How the layer produces `R_t` for negative `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackwardMode {
    /// Run the tableau with a negative step.
    #[default]
    Direct,
    /// Use the adjoint method for `t < 0`. With a symmetric bias this makes the
    /// symplectic layer self-adjoint: a step of `−h` exactly reverses a step of `h`.
    Adjoint,
}

/// The standard layer `R_t` used by the boundary maps.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLayer {
    pub tableau: ButcherTableau,
    pub substeps: usize,
    pub backward: BackwardMode,
    pub adjoint_tol: f64,
    pub adjoint_max_iter: usize,
}

impl StandardLayer {
    pub fn new(tableau: ButcherTableau) -> Self {
        Self {
            tableau,
            substeps: 1,
            backward: BackwardMode::Direct,
            adjoint_tol: 1e-14,
            adjoint_max_iter: 30,
        }
    }

    pub fn with_backward(mut self, backward: BackwardMode) -> Self {
        self.backward = backward;
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn flow(&self, spec: &dyn ProblemSpec, w: &State, t: f64) -> Result<ExtendedState> {
        if t < 0.0 && self.backward == BackwardMode::Adjoint {
            adjoint_flow(
                &self.tableau,
                spec,
                w,
                t,
                self.substeps,
                self.adjoint_tol,
                self.adjoint_max_iter,
            )
        } else {
            rk_flow(&self.tableau, spec, w, t, self.substeps)
        }
    }

    pub fn flow_jet(&self, spec: &dyn ProblemSpec, w: &State, t: f64) -> Result<JetState> {
        if t < 0.0 && self.backward == BackwardMode::Adjoint {
            adjoint_flow_jet(
                &self.tableau,
                spec,
                w,
                t,
                self.substeps,
                self.adjoint_tol,
                self.adjoint_max_iter,
            )
        } else {
            rk_flow_jet(&self.tableau, spec, w, t, self.substeps)
        }
    }
}
