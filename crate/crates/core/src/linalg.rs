//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Right singular vectors of `a` (as columns of an `n×n` matrix) ordered by
/// decreasing singular value, together with the padded singular values.
///
/// Wide matrices are padded with zero rows so the full right basis, including
/// the null space, is available.
pub fn svd_right(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.ncols();
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        v.set_column(col, &v_t.row(i).transpose());
    }
    (sigma, v)
}

/// Orthonormal basis of the numerical null space of `a`.
///
/// Singular values below `rel_tol · σ_max` count as zero.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (sigma, v) = svd_right(a);
    let n = a.ncols();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let rank = sigma.iter().filter(|&&s| s > rel_tol * smax).count();
    v.columns(rank, n - rank).into_owned()
}

/// The `dim` right singular vectors with the smallest singular values, plus the
/// gap ratio `σ[n-dim] / σ[n-dim-1]` (zero-space quality, small is good).
pub fn smallest_right_vectors(a: &DMatrix<f64>, dim: usize) -> (DMatrix<f64>, f64) {
    let (sigma, v) = svd_right(a);
    let n = a.ncols();
    let split = n - dim;
    let gap = if split == 0 || dim == 0 {
        0.0
    } else if sigma[split - 1] > 0.0 {
        sigma[split] / sigma[split - 1]
    } else {
        f64::INFINITY
    };
    (v.columns(split, dim).into_owned(), gap)
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, 1e-14 * smax.max(f64::MIN_POSITIVE))
        .expect("singular vectors were computed")
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Gram–Schmidt on the columns of `a` (assumed full column rank).
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}
