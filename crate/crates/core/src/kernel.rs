//! Gain and covariance formulas shared by the linear and extended filters.
//!
//! With stacked column blocks `A_[:,i]`, `C_[:,i]` and the global `C`:
//!
//! ```text
//! Z = C A_[:,i] P A_iiᵀ + C_[:,i] Q_i
//! S = C A_[:,i] P A_[:,i]ᵀ Cᵀ + C_[:,i] Q_i C_[:,i]ᵀ + R
//! L = Zᵀ S⁻¹
//! P⁺ = A_ii P A_iiᵀ + Q_i − L Z
//! ```

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, eig_range, symmetrize};
use crate::Scalar;

/// Linearized quantities one local filter needs at one instant.
#[derive(Debug, Clone, Copy)]
pub struct LocalBlocks<'a, T: Scalar> {
    pub a_ii: &'a DMatrix<T>,
    pub a_col: &'a DMatrix<T>,
    pub c: &'a DMatrix<T>,
    pub c_col: &'a DMatrix<T>,
    pub q: &'a DMatrix<T>,
    pub r: &'a DMatrix<T>,
}

/// Cross covariance `Z` (n_y × n_xi) and innovation covariance `S` (n_y × n_y).
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationTerms<T: Scalar> {
    pub z: DMatrix<T>,
    pub s: DMatrix<T>,
}

pub fn innovation_terms<T: Scalar>(b: LocalBlocks<'_, T>, p: &DMatrix<T>) -> InnovationTerms<T> {
    let ca = b.c * b.a_col;
    let cq = b.c_col * b.q;
    let cap = &ca * p;
    let z = &cap * b.a_ii.transpose() + &cq;
    let s = &cap * ca.transpose() + &cq * b.c_col.transpose() + b.r;
    InnovationTerms { z, s: symmetrize(&s) }
}

fn factor<T: Scalar>(s: &DMatrix<T>, index: usize, k: usize) -> Result<Cholesky<T, nalgebra::Dyn>> {
    cholesky(s).ok_or(Error::InnovationNotSpd { index, k })
}

/// `L = Zᵀ S⁻¹`, applied through a Cholesky solve.
pub fn gain<T: Scalar>(terms: &InnovationTerms<T>, index: usize, k: usize) -> Result<DMatrix<T>> {
    if terms.s.nrows() == 0 {
        return Ok(DMatrix::zeros(terms.z.ncols(), 0));
    }
    Ok(factor(&terms.s, index, k)?.solve(&terms.z).transpose())
}

/// `A_ii P A_iiᵀ + Q_i − L Z`, symmetrized and checked for positive definiteness.
pub fn covariance<T: Scalar>(
    b: LocalBlocks<'_, T>,
    p: &DMatrix<T>,
    l: &DMatrix<T>,
    z: &DMatrix<T>,
    index: usize,
    k: usize,
) -> Result<DMatrix<T>> {
    let next = -(l * z) + (b.a_ii * p * b.a_ii.transpose() + b.q);
    checked(symmetrize(&next), index, k)
}

pub(crate) fn checked<T: Scalar>(p: DMatrix<T>, index: usize, k: usize) -> Result<DMatrix<T>> {
    if cholesky(&p).is_none() || p.iter().any(|v| !v.as_f64().is_finite()) {
        return Err(Error::CovarianceCollapse { index, k });
    }
    Ok(p)
}

/// Measurement update of a prior at `k = 0`:
/// `L₀ = P C_[:,i]ᵀ (C_[:,i] P C_[:,i]ᵀ + R)⁻¹`, `P₀ = P − L₀ C_[:,i] P`.
pub fn prior_update<T: Scalar>(
    p: &DMatrix<T>,
    c_col: &DMatrix<T>,
    r: &DMatrix<T>,
    index: usize,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if r.nrows() == 0 {
        return Ok((DMatrix::zeros(p.nrows(), 0), p.clone()));
    }
    let cp = c_col * p;
    let s = symmetrize(&(&cp * c_col.transpose() + r));
    let l = factor(&s, index, 0)?.solve(&cp).transpose();
    let post = symmetrize(&(p - &l * &cp));
    Ok((l, checked(post, index, 0)?))
}

/// Relative eigenvalue floor: events fire when `λ_min < FLOOR_RATIO · trace / n`.
pub const FLOOR_RATIO: f64 = 1e-12;
/// Diagonal loading added on a floor event.
pub const FLOOR_LOADING: f64 = 1e-10;

/// Loads the diagonal when the smallest eigenvalue is negligible relative to the
/// mean eigenvalue; returns whether the floor fired.
pub fn apply_floor<T: Scalar>(p: &mut DMatrix<T>) -> bool {
    let n = p.nrows();
    if n == 0 {
        return false;
    }
    let (lo, _) = eig_range(p);
    let threshold = T::of(FLOOR_RATIO) * p.trace() / T::of(n as f64);
    if lo < threshold {
        for j in 0..n {
            p[(j, j)] += T::of(FLOOR_LOADING);
        }
        true
    } else {
        false
    }
}
