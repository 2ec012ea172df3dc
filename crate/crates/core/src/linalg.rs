//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below `RANK_TOL` times the reference scale count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigen-decomposition (eigenvalues unsorted, columns are eigenvectors).
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let e = symmetrize(m).symmetric_eigen();
    (e.eigenvalues, e.eigenvectors)
}

/// Symmetric PSD square root; negative eigenvalues are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()));
    &vecs * d * vecs.transpose()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix. Eigenvalues below
/// `RANK_TOL * max|eigenvalue|` are dropped.
pub fn pinv_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = RANK_TOL * scale;
    let d = DMatrix::from_diagonal(&vals.map(|v| if v.abs() > cut { 1.0 / v } else { 0.0 }));
    &vecs * d * vecs.transpose()
}

/// Number of eigenvalues above `RANK_TOL * scale`.
pub fn rank_with_scale(m: &DMatrix<f64>, scale: f64) -> usize {
    let (vals, _) = sym_eigen(m);
    vals.iter().filter(|v| **v > RANK_TOL * scale).count()
}

pub fn max_abs_eigen(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Numerical rank relative to the largest eigenvalue of `m` itself.
pub fn rank(m: &DMatrix<f64>) -> usize {
    rank_with_scale(m, max_abs_eigen(m))
}

/// Orthonormal basis (columns) of the range of a symmetric PSD matrix.
pub fn range_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > RANK_TOL * scale).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| vecs[(r, keep[c])])
}

/// Orthonormal basis of the null space of a (possibly rectangular) matrix.
pub fn null_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = m.transpose() * m;
    let (vals, vecs) = sym_eigen(&gram);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= RANK_TOL * scale).collect();
    DMatrix::from_fn(gram.nrows(), keep.len(), |r, c| vecs[(r, keep[c])])
}

/// General inverse via LU; errors when numerically singular.
pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    symmetrize(m)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Copy of the `(i, j)` block of size `rows x cols` starting at `(i*rows, j*cols)`.
pub fn block(m: &DMatrix<f64>, i: usize, j: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((i * rows, j * cols), (rows, cols)).into_owned()
}

pub fn sub_vector(v: &DVector<f64>, i: usize, len: usize) -> DVector<f64> {
    v.rows(i * len, len).into_owned()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Type-7 (linear interpolation) empirical quantile; sorts a copy.
pub fn quantile_type7(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_type7_sorted(&v, q)
}

pub fn quantile_type7_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// `log(sum(exp(x)))` with max subtraction; `-inf` entries contribute nothing.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
