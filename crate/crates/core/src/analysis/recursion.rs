use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{StatePartition, SystemModel};
use crate::record::EstimationRecord;
use crate::simulate::Trajectory;
use crate::Scalar;

/// One instant of the closed-loop error recursion
/// `e_{k|k} = F_k e_{k-1|k-1} + r_k + s_k` with `F_k = (I − L_k C_k) A_{k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDecomposition<T: Scalar> {
    pub k: usize,
    /// `e_{k|k}`.
    pub error: DVector<T>,
    /// `e_{k|k-1}`.
    pub prior_error: DVector<T>,
    /// `e_{k-1|k-1}`.
    pub previous_error: DVector<T>,
    pub transition: DMatrix<T>,
    /// `r_k = (I − L_k C_k) φ_{k-1} − L_k ϕ_k`.
    pub r: DVector<T>,
    /// `s_k = (I − L_k C_k) w_{k-1} − L_k v_k`.
    pub s: DVector<T>,
    /// `φ_{k-1} = f(x_{k-1}) − f(x̂_{k-1|k-1}) − A_{k-1} e_{k-1|k-1}`.
    pub dynamics_remainder: DVector<T>,
    /// `ϕ_k = h(x_k) − h(x̂_{k|k-1}) − C_k e_{k|k-1}`.
    pub output_remainder: DVector<T>,
    pub stacked_gain: DMatrix<T>,
    /// `‖e_{k|k} − (F_k e_{k-1|k-1} + r_k + s_k)‖_∞`.
    pub residual: f64,
    /// `residual / (1 + max(‖x_k‖_∞, ‖x_{k-1}‖_∞))`.
    pub relative_residual: f64,
}

fn missing(what: &str, k: usize) -> Error {
    Error::MissingRecord(format!("{what} at k={k}"))
}

/// Evaluates the error recursion at instant `k ≥ 1` of a recorded run.
pub fn error_step<T: Scalar>(
    model: &dyn SystemModel<T>,
    truth: &Trajectory<T>,
    record: &EstimationRecord<T>,
    k: usize,
) -> Result<ErrorDecomposition<T>> {
    if k == 0 {
        return Err(missing("previous instant", 0));
    }
    let cur = record.steps.get(k).ok_or_else(|| missing("estimator step", k))?;
    let prev = record.steps.get(k - 1).ok_or_else(|| missing("estimator step", k - 1))?;
    let x = truth.states.get(k).ok_or_else(|| missing("true state", k))?;
    let x_prev = &truth.states[k - 1];
    let w = truth.process_noise.get(k - 1).ok_or_else(|| missing("process noise", k - 1))?;
    let v = truth.measurement_noise.get(k).ok_or_else(|| missing("measurement noise", k))?;
    let a = cur.a_prev.as_ref().ok_or_else(|| missing("A_{k-1}", k))?;
    let c = &cur.c;
    let l = cur.stacked_gain();
    let n = x.len();

    let previous_error = x_prev - &prev.estimate;
    let prior_error = x - &cur.prediction;
    let error = x - &cur.estimate;
    let dynamics_remainder = model.f(x_prev)? - &cur.prediction - a * &previous_error;
    let output_remainder = model.h(x)? - model.h(&cur.prediction)? - c * &prior_error;
    let closed = DMatrix::identity(n, n) - &l * c;
    let transition = &closed * a;
    let r = &closed * &dynamics_remainder - &l * &output_remainder;
    let s = &closed * w - &l * v;
    let residual = (&error - (&transition * &previous_error + &r + &s)).amax().as_f64();
    let relative_residual = residual / (1.0 + x.amax().as_f64().max(x_prev.amax().as_f64()));
    Ok(ErrorDecomposition {
        k,
        error,
        prior_error,
        previous_error,
        transition,
        r,
        s,
        dynamics_remainder,
        output_remainder,
        stacked_gain: l,
        residual,
        relative_residual,
    })
}

/// Error recursion for every `k = 1..=K`.
pub fn error_recursion<T: Scalar>(
    model: &dyn SystemModel<T>,
    truth: &Trajectory<T>,
    record: &EstimationRecord<T>,
) -> Result<Vec<ErrorDecomposition<T>>> {
    (1..record.steps.len()).map(|k| error_step(model, truth, record, k)).collect()
}

/// Block-diagonal part `F_d` and off-diagonal part `F_o = F − F_d`.
pub fn split_transition<T: Scalar>(f: &DMatrix<T>, partition: &StatePartition) -> (DMatrix<T>, DMatrix<T>) {
    let mut f_d = DMatrix::zeros(f.nrows(), f.ncols());
    for i in 0..partition.n_subsystems() {
        let (o, d) = (partition.offset(i), partition.dim(i));
        f_d.view_mut((o, o), (d, d)).copy_from(&f.view((o, o), (d, d)));
    }
    let f_o = f - &f_d;
    (f_d, f_o)
}

/// `F_k = (I − L_k C_k) A_{k-1}` from a recorded step.
pub fn transition_at<T: Scalar>(record: &EstimationRecord<T>, k: usize) -> Result<DMatrix<T>> {
    let step = record.steps.get(k).ok_or_else(|| missing("estimator step", k))?;
    let a = step.a_prev.as_ref().ok_or_else(|| missing("A_{k-1}", k))?;
    let l = step.stacked_gain();
    let n = a.nrows();
    Ok((DMatrix::identity(n, n) - l * &step.c) * a)
}
