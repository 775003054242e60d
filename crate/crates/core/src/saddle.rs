//! Dense symmetric saddle-point ("KKT") systems.
//!
//! Every linear solve in the crate has the block form
//!
//! ```text
//! Negative:  [ M   -Gᵀ ] [x]   [f]        Positive:  [ B   Gᵀ ] [x]   [f]
//!            [ -G   0  ] [y] = [g]                   [ G   0  ] [y] = [g]
//! ```
//!
//! with an `N×N` symmetric top block and a `d×N` coupling of full row rank.
//! The two layouts differ only by the sign of `y` and of the bottom
//! right-hand side, so one factorization serves both.
//!
//! Factorization eliminates the top block first (Cholesky of the top block,
//! then Cholesky of the `d×d` Schur complement `G B⁻¹ Gᵀ`). When the top block
//! is not positive definite, or the Schur complement is too ill-conditioned,
//! the assembled `(N+d)×(N+d)` matrix is factored densely with full pivoting.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, FullPivLU};

use crate::error::{Error, Result};

/// Pivots smaller than this fraction of the largest pivot mark a singular system.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

/// Schur complements with a larger condition estimate are refactored densely.
pub const SCHUR_CONDITION_LIMIT: f64 = 1e12;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of saddle factorizations performed on the current thread.
///
/// Used to check that callers reuse factorizations across right-hand sides.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(|c| c.get())
}

/// Sign convention of the off-diagonal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `[[M, -Gᵀ], [-G, 0]]`, the layout of the Euler–Lagrange multiplier system.
    Negative,
    /// `[[B, Gᵀ], [G, 0]]`, the layout of the projection-derivative systems.
    Positive,
}

#[derive(Debug, Clone)]
pub struct SaddleSystem {
    top: DMatrix<f64>,
    coupling: DMatrix<f64>,
    orientation: Orientation,
}

impl SaddleSystem {
    pub fn new(top: DMatrix<f64>, coupling: DMatrix<f64>, orientation: Orientation) -> Result<Self> {
        let n = top.nrows();
        if top.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: top.ncols(),
                context: "saddle top block must be square",
            });
        }
        if coupling.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coupling.ncols(),
                context: "saddle coupling columns",
            });
        }
        if coupling.nrows() > n {
            return Err(Error::singular(format!(
                "{} constraints cannot have full rank in dimension {n}",
                coupling.nrows()
            )));
        }
        Ok(Self {
            top,
            coupling,
            orientation,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.top.nrows(), self.coupling.nrows())
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// The full `(N+d)×(N+d)` matrix in this system's layout.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (n, d) = self.dims();
        let s = match self.orientation {
            Orientation::Negative => -1.0,
            Orientation::Positive => 1.0,
        };
        let mut a = DMatrix::zeros(n + d, n + d);
        a.view_mut((0, 0), (n, n)).copy_from(&self.top);
        a.view_mut((n, 0), (d, n)).copy_from(&(&self.coupling * s));
        a.view_mut((0, n), (n, d))
            .copy_from(&(self.coupling.transpose() * s));
        a
    }

    pub fn factor(&self) -> Result<SaddleFactorization> {
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        let (n, d) = self.dims();
        if let Some(f) = self.factor_range_space() {
            return Ok(f);
        }
        let positive = SaddleSystem {
            top: self.top.clone(),
            coupling: self.coupling.clone(),
            orientation: Orientation::Positive,
        };
        let lu = FullPivLU::new(positive.assemble());
        let u = lu.u();
        let pivots: Vec<f64> = (0..n + d).map(|i| u[(i, i)].abs()).collect();
        let (lo, hi) = min_max(&pivots);
        if !(hi > 0.0) || !(lo > PIVOT_TOLERANCE * hi) {
            return Err(Error::singular(format!(
                "pivot ratio {:.3e} below {PIVOT_TOLERANCE:e}",
                if hi > 0.0 { lo / hi } else { 0.0 }
            )));
        }
        Ok(SaddleFactorization {
            n,
            d,
            orientation: self.orientation,
            condition_estimate: hi / lo,
            kind: Kind::Dense(lu),
        })
    }

    fn factor_range_space(&self) -> Option<SaddleFactorization> {
        let (n, d) = self.dims();
        let top = Cholesky::new(self.top.clone())?;
        let cond_top = cholesky_condition(top.l_dirty(), n)?;
        let g = &self.coupling;
        // B⁻¹ Gᵀ, reused in every solve.
        let binv_gt = top.solve(&g.transpose());
        let schur = g * &binv_gt;
        let schur = Cholesky::new(schur)?;
        let cond_schur = if d == 0 {
            1.0
        } else {
            cholesky_condition(schur.l_dirty(), d)?
        };
        if cond_schur > SCHUR_CONDITION_LIMIT || cond_top > SCHUR_CONDITION_LIMIT {
            return None;
        }
        Some(SaddleFactorization {
            n,
            d,
            orientation: self.orientation,
            condition_estimate: cond_top.max(cond_schur),
            kind: Kind::RangeSpace {
                top,
                coupling: g.clone(),
                binv_gt,
                schur,
            },
        })
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Condition estimate from Cholesky pivots; `None` if a pivot is negligible.
fn cholesky_condition(l: &DMatrix<f64>, n: usize) -> Option<f64> {
    let pivots: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let (lo, hi) = min_max(&pivots);
    if !(hi > 0.0) || !(lo > PIVOT_TOLERANCE * hi) {
        return None;
    }
    Some(hi / lo)
}

#[derive(Debug, Clone)]
enum Kind {
    RangeSpace {
        top: Cholesky<f64, Dyn>,
        coupling: DMatrix<f64>,
        binv_gt: DMatrix<f64>,
        schur: Cholesky<f64, Dyn>,
    },
    Dense(FullPivLU<f64, Dyn, Dyn>),
}

/// A factored saddle system, reusable for any number of right-hand sides.
#[derive(Debug, Clone)]
pub struct SaddleFactorization {
    n: usize,
    d: usize,
    orientation: Orientation,
    condition_estimate: f64,
    kind: Kind,
}

impl SaddleFactorization {
    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// True when the Schur-complement path was used.
    pub fn is_range_space(&self) -> bool {
        matches!(self.kind, Kind::RangeSpace { .. })
    }

    pub fn solve(
        &self,
        rhs_top: &DVector<f64>,
        rhs_bottom: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let top = DMatrix::from_column_slice(rhs_top.len(), 1, rhs_top.as_slice());
        let bottom = DMatrix::from_column_slice(rhs_bottom.len(), 1, rhs_bottom.as_slice());
        let (x, y) = self.solve_many(&top, &bottom)?;
        Ok((x.column(0).into_owned(), y.column(0).into_owned()))
    }

    /// Solve for several right-hand sides at once (one per column).
    pub fn solve_many(
        &self,
        rhs_top: &DMatrix<f64>,
        rhs_bottom: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (n, d) = (self.n, self.d);
        if rhs_top.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs_top.nrows(),
                context: "saddle rhs_top",
            });
        }
        if rhs_bottom.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: rhs_bottom.nrows(),
                context: "saddle rhs_bottom",
            });
        }
        if rhs_top.ncols() != rhs_bottom.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rhs_top.ncols(),
                found: rhs_bottom.ncols(),
                context: "saddle right-hand side count",
            });
        }
        let k = rhs_top.ncols();
        // Work in the positive layout: y⁺ = ±y, g⁺ = ±g.
        let sign = match self.orientation {
            Orientation::Negative => -1.0,
            Orientation::Positive => 1.0,
        };
        let g_pos = rhs_bottom * sign;
        let (x, y_pos) = match &self.kind {
            Kind::RangeSpace {
                top,
                coupling,
                binv_gt,
                schur,
            } => {
                let binv_f = top.solve(rhs_top);
                let y = schur.solve(&(coupling * &binv_f - &g_pos));
                let x = binv_f - binv_gt * &y;
                (x, y)
            }
            Kind::Dense(lu) => {
                let mut rhs = DMatrix::zeros(n + d, k);
                rhs.view_mut((0, 0), (n, k)).copy_from(rhs_top);
                rhs.view_mut((n, 0), (d, k)).copy_from(&g_pos);
                let sol = lu
                    .solve(&rhs)
                    .ok_or_else(|| Error::singular("dense saddle solve failed"))?;
                (
                    sol.view((0, 0), (n, k)).into_owned(),
                    sol.view((n, 0), (d, k)).into_owned(),
                )
            }
        };
        Ok((x, y_pos * sign))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sys(top: DMatrix<f64>, g: DMatrix<f64>, o: Orientation) -> SaddleSystem {
        SaddleSystem::new(top, g, o).unwrap()
    }

    #[test]
    fn well_posed_two_plus_one() {
        let s = sys(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Orientation::Negative,
        );
        let f = s.factor().unwrap();
        assert!(f.condition_estimate().is_finite());
    }

    #[test]
    fn rank_deficient_coupling_is_singular() {
        let s = sys(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            Orientation::Negative,
        );
        assert!(matches!(s.factor(), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn degenerate_top_block_is_singular() {
        let s = sys(
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Orientation::Negative,
        );
        assert!(matches!(s.factor(), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn negative_layout_hand_solution() {
        let s = sys(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Orientation::Negative,
        );
        let (x, y) = s
            .factor()
            .unwrap()
            .solve(&DVector::from_vec(vec![1.0, 1.0]), &DVector::from_vec(vec![0.0]))
            .unwrap();
        assert_abs_diff_eq!(x, DVector::from_vec(vec![0.0, 1.0]), epsilon = 1e-15);
        assert_abs_diff_eq!(y, DVector::from_vec(vec![-1.0]), epsilon = 1e-15);
    }

    #[test]
    fn positive_layout_hand_solution() {
        let s = sys(
            DMatrix::identity(3, 3),
            DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 2.0]),
            Orientation::Positive,
        );
        let (x, y) = s
            .factor()
            .unwrap()
            .solve(
                &DVector::from_vec(vec![0.0, 0.0, 1.0]),
                &DVector::from_vec(vec![0.0]),
            )
            .unwrap();
        assert_abs_diff_eq!(x, DVector::zeros(3), epsilon = 1e-15);
        assert_abs_diff_eq!(y, DVector::from_vec(vec![0.5]), epsilon = 1e-15);
    }

    #[test]
    fn indefinite_top_positive_on_kernel_uses_dense_path() {
        // B is singular but positive definite on ker G.
        let s = sys(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Orientation::Positive,
        );
        let f = s.factor().unwrap();
        assert!(!f.is_range_space());
        let (x, y) = f
            .solve(&DVector::from_vec(vec![3.0, 2.0]), &DVector::from_vec(vec![5.0]))
            .unwrap();
        assert_abs_diff_eq!(x, DVector::from_vec(vec![5.0, 2.0]), epsilon = 1e-14);
        assert_abs_diff_eq!(y, DVector::from_vec(vec![3.0]), epsilon = 1e-14);
    }

    #[test]
    fn rhs_length_is_checked() {
        let s = sys(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Orientation::Positive,
        );
        let f = s.factor().unwrap();
        let err = f
            .solve(&DVector::zeros(3), &DVector::zeros(1))
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
