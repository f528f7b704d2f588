use nalgebra::{DMatrix, DVector};

use super::{NonlinearModel, StatePartition};
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::Scalar;

/// Source of Jacobian blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Central-difference step for coordinate value `x`: `max(s, s·|x|)`.
pub fn fd_step<T: Scalar>(x: T) -> T {
    let s = T::of(T::FD_REL_STEP);
    let scaled = s * x.abs();
    if scaled > s {
        scaled
    } else {
        s
    }
}

/// `‖a − b‖_F / max(‖b‖_F, 1)`.
pub fn jacobian_rel_error<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    (a - b).norm().as_f64() / b.norm().as_f64().max(1.0)
}

fn lin_err(index: usize, reason: impl Into<String>) -> Error {
    Error::Linearization { index, reason: reason.into() }
}

fn central_difference<T: Scalar>(
    x: &DVector<T>,
    cols: std::ops::Range<usize>,
    rows: usize,
    index: usize,
    eval: impl Fn(&DVector<T>) -> Result<DVector<T>>,
) -> Result<DMatrix<T>> {
    let mut out = DMatrix::zeros(rows, cols.len());
    for (c, j) in cols.enumerate() {
        let h = fd_step(x[j]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = eval(&xp).map_err(|e| lin_err(index, e.to_string()))?;
        let fm = eval(&xm).map_err(|e| lin_err(index, e.to_string()))?;
        out.set_column(c, &((fp - fm) / (h + h)));
    }
    Ok(out)
}

/// Finite-difference blocks `[∂f_i/∂xⁱ, ∂f_i/∂x^{l_0}, ...]` in neighbor declaration order.
pub(crate) fn transition_blocks_fd<T: Scalar>(model: &NonlinearModel<T>, i: usize, x: &DVector<T>) -> Result<Vec<DMatrix<T>>> {
    let p = model.partition();
    std::iter::once(i)
        .chain(model.subsystem(i).neighbors.iter().copied())
        .map(|l| central_difference(x, p.range(l), p.dim(i), i, |z| model.f_local(i, z)))
        .collect()
}

pub(crate) fn output_block_fd<T: Scalar>(model: &NonlinearModel<T>, i: usize, x: &DVector<T>) -> Result<DMatrix<T>> {
    let p = model.partition();
    central_difference(x, p.range(i), p.out_dim(i), i, |z| model.h_local(i, z))
}

/// Jacobian blocks of `f_i` with respect to its own state and each declared neighbor.
pub fn transition_blocks<T: Scalar>(
    model: &NonlinearModel<T>,
    i: usize,
    x: &DVector<T>,
    mode: JacobianMode,
) -> Result<Vec<DMatrix<T>>> {
    let p = model.partition();
    p.check_state(x, "linearization point")?;
    if !all_finite(x.iter().copied()) {
        return Err(lin_err(i, "non-finite linearization point"));
    }
    match mode {
        JacobianMode::FiniteDifference => transition_blocks_fd(model, i, x),
        JacobianMode::Analytic => {
            let sub = model.subsystem(i);
            let blocks = sub
                .dynamics
                .transition_jacobian(&p.local(x, i), &model.neighbor_states(i, x))
                .ok_or_else(|| lin_err(i, "no analytic transition Jacobian"))?;
            let expected = std::iter::once(i).chain(sub.neighbors.iter().copied());
            if blocks.len() != sub.neighbors.len() + 1 {
                return Err(lin_err(i, "analytic transition Jacobian has the wrong number of blocks"));
            }
            for (b, l) in blocks.iter().zip(expected) {
                if b.shape() != (p.dim(i), p.dim(l)) {
                    return Err(lin_err(i, format!("block for subsystem {l} has shape {:?}", b.shape())));
                }
                if !all_finite(b.iter().copied()) {
                    return Err(lin_err(i, "non-finite analytic Jacobian"));
                }
            }
            Ok(blocks)
        }
    }
}

/// Jacobian `∂h_i/∂xⁱ`.
pub fn output_block<T: Scalar>(model: &NonlinearModel<T>, i: usize, x: &DVector<T>, mode: JacobianMode) -> Result<DMatrix<T>> {
    let p = model.partition();
    p.check_state(x, "linearization point")?;
    if !all_finite(x.iter().copied()) {
        return Err(lin_err(i, "non-finite linearization point"));
    }
    match mode {
        JacobianMode::FiniteDifference => output_block_fd(model, i, x),
        JacobianMode::Analytic => {
            let b = model
                .subsystem(i)
                .dynamics
                .output_jacobian(&p.local(x, i))
                .ok_or_else(|| lin_err(i, "no analytic output Jacobian"))?;
            if b.shape() != (p.out_dim(i), p.dim(i)) {
                return Err(lin_err(i, format!("output Jacobian has shape {:?}", b.shape())));
            }
            if !all_finite(b.iter().copied()) {
                return Err(lin_err(i, "non-finite analytic Jacobian"));
            }
            Ok(b)
        }
    }
}

/// Global dynamics Jacobian `A = ∂f/∂x`.
pub fn dynamics_jacobian<T: Scalar>(model: &NonlinearModel<T>, x: &DVector<T>, mode: JacobianMode) -> Result<DMatrix<T>> {
    let p = model.partition();
    let mut a = DMatrix::zeros(p.state_dim(), p.state_dim());
    for i in 0..model.n_subsystems() {
        let blocks = transition_blocks(model, i, x, mode)?;
        let cols = std::iter::once(i).chain(model.subsystem(i).neighbors.iter().copied());
        for (b, l) in blocks.iter().zip(cols) {
            a.view_mut((p.offset(i), p.offset(l)), (p.dim(i), p.dim(l))).copy_from(b);
        }
    }
    Ok(a)
}

/// Global output Jacobian `C = ∂h/∂x`, block diagonal by construction.
pub fn output_jacobian<T: Scalar>(model: &NonlinearModel<T>, x: &DVector<T>, mode: JacobianMode) -> Result<DMatrix<T>> {
    let p = model.partition();
    let mut c = DMatrix::zeros(p.output_dim(), p.state_dim());
    for i in 0..model.n_subsystems() {
        let b = output_block(model, i, x, mode)?;
        c.view_mut((p.out_offset(i), p.offset(i)), (p.out_dim(i), p.dim(i))).copy_from(&b);
    }
    Ok(c)
}

/// Stacked column block `A_[:,i] = ∂f/∂xⁱ` (n_x × n_xi), built from the
/// subsystems that read `xⁱ`.
pub fn dynamics_columns<T: Scalar>(model: &NonlinearModel<T>, i: usize, x: &DVector<T>, mode: JacobianMode) -> Result<DMatrix<T>> {
    let p = model.partition();
    let mut out = DMatrix::zeros(p.state_dim(), p.dim(i));
    for l in std::iter::once(i).chain(model.dependents(i).iter().copied()) {
        let block = match mode {
            JacobianMode::FiniteDifference => {
                p.check_state(x, "linearization point")?;
                central_difference(x, p.range(i), p.dim(l), l, |z| model.f_local(l, z))?
            }
            JacobianMode::Analytic => {
                let pos = if l == i {
                    0
                } else {
                    1 + model.subsystem(l).neighbors.iter().position(|&m| m == i).expect("dependent lists i")
                };
                transition_blocks(model, l, x, mode)?.swap_remove(pos)
            }
        };
        out.view_mut((p.offset(l), 0), (p.dim(l), p.dim(i))).copy_from(&block);
    }
    Ok(out)
}

/// Linearization of the global maps: `A` at `a_point`, `C` at `c_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationBlocks<T: Scalar> {
    pub k: usize,
    pub a: DMatrix<T>,
    pub a_point: DVector<T>,
    pub c: DMatrix<T>,
    pub c_point: DVector<T>,
    pub partition: StatePartition,
}

impl<T: Scalar> LinearizationBlocks<T> {
    /// `A_li`.
    pub fn a_block(&self, l: usize, i: usize) -> DMatrix<T> {
        let p = &self.partition;
        self.a.view((p.offset(l), p.offset(i)), (p.dim(l), p.dim(i))).into_owned()
    }

    /// `A_[:,i]`.
    pub fn a_cols(&self, i: usize) -> DMatrix<T> {
        self.a.columns(self.partition.offset(i), self.partition.dim(i)).into_owned()
    }

    /// `C_[:,i]`.
    pub fn c_cols(&self, i: usize) -> DMatrix<T> {
        self.c.columns(self.partition.offset(i), self.partition.dim(i)).into_owned()
    }
}

/// Linearizes dynamics and outputs at one point.
pub fn linearize<T: Scalar>(model: &NonlinearModel<T>, point: &DVector<T>, mode: JacobianMode) -> Result<LinearizationBlocks<T>> {
    linearize_at(model, 0, point, point, mode)
}

/// Linearizes the dynamics at `a_point` and the outputs at `c_point`.
pub fn linearize_at<T: Scalar>(
    model: &NonlinearModel<T>,
    k: usize,
    a_point: &DVector<T>,
    c_point: &DVector<T>,
    mode: JacobianMode,
) -> Result<LinearizationBlocks<T>> {
    Ok(LinearizationBlocks {
        k,
        a: dynamics_jacobian(model, a_point, mode)?,
        a_point: a_point.clone(),
        c: output_jacobian(model, c_point, mode)?,
        c_point: c_point.clone(),
        partition: model.partition().clone(),
    })
}
