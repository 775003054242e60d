//! Central finite differences, used for derivative fallbacks and self-checks.

use nalgebra::{DMatrix, DVector};

/// Default step for the derivative self-checks.
pub const CHECK_STEP: f64 = 1e-6;

/// Central-difference Jacobian of a vector function (`m×n`, column `j` is `∂f/∂xʲ`).
pub fn jacobian<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        cols.push((f(&xp) - f(&xm)) / (2.0 * step));
    }
    let m = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, n, |i, j| cols[j][i])
}

/// Central-difference directional derivative of a matrix-valued function.
pub fn matrix_directional<F>(f: F, x: &DVector<f64>, dir: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    (f(&(x + dir * step)) - f(&(x - dir * step))) / (2.0 * step)
}

/// Fourth-order central-difference Jacobian.
pub fn jacobian4<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let shifted = |s: f64| {
            let mut y = x.clone();
            y[j] += s * step;
            f(&y)
        };
        let c = (shifted(-2.0) - shifted(-1.0) * 8.0 + shifted(1.0) * 8.0 - shifted(2.0))
            / (12.0 * step);
        cols.push(c);
    }
    let m = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(m, n, |i, j| cols[j][i])
}

/// `‖a − b‖∞ / max(1, ‖a‖∞)`.
pub fn relative_error(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    let scale = analytic.amax().max(1.0);
    (analytic - numeric).amax() / scale
}
