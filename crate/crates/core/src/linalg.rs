//! Small dense linear-algebra helpers shared by the estimators and monitors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::Scalar;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::of(0.5)
}

/// Cholesky factor of the symmetrized matrix, or `None` when it is not positive definite.
pub fn cholesky<T: Scalar>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    if m.nrows() != m.ncols() {
        return None;
    }
    Cholesky::new(symmetrize(m))
}

pub fn is_spd<T: Scalar>(m: &DMatrix<T>) -> bool {
    m.nrows() == m.ncols() && (m.nrows() == 0 || cholesky(m).is_some())
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>) -> Option<DMatrix<T>> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    cholesky(m).map(|c| symmetrize(&c.inverse()))
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eig_range<T: Scalar>(m: &DMatrix<T>) -> (T, T) {
    if m.nrows() == 0 {
        return (T::zero(), T::zero());
    }
    let ev = symmetrize(m).symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Spectral (induced 2-) norm.
pub fn spectral_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Ratio of largest to smallest singular value; infinite when singular.
pub fn condition_number<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min().as_f64(), sv.max().as_f64());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Block-diagonal concatenation.
pub fn block_diag<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical concatenation of vectors.
pub fn stack<T: Scalar>(parts: &[DVector<T>]) -> DVector<T> {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

/// Horizontal concatenation of matrices sharing a row count.
pub fn hstack<T: Scalar>(rows: usize, blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(b);
        c += b.ncols();
    }
    out
}

/// Diagonal matrix from a vector of squared standard deviations.
pub fn diag_from<T: Scalar>(values: &[T]) -> DMatrix<T> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

pub fn all_finite<T: Scalar>(values: impl IntoIterator<Item = T>) -> bool {
    values.into_iter().all(|v| v.as_f64().is_finite())
}

/// `‖a − b‖ / max(‖b‖, floor)` in the Euclidean norm.
pub fn rel_diff<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, floor: f64) -> f64 {
    let num = (a - b).norm().as_f64();
    num / b.norm().as_f64().max(floor)
}

pub fn rel_diff_vec<T: Scalar>(a: &DVector<T>, b: &DVector<T>, floor: f64) -> f64 {
    let num = (a - b).norm().as_f64();
    num / b.norm().as_f64().max(floor)
}
