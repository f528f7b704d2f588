//! Per-instant estimator output recorded by the filter drivers.

use nalgebra::{DMatrix, DVector};

use crate::linalg::block_diag;
use crate::model::StatePartition;
use crate::Scalar;

/// Everything one instant of a distributed filter produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T: Scalar> {
    pub k: usize,
    /// Stacked `x̂_{k|k-1}`; the prior mean at `k = 0`.
    pub prediction: DVector<T>,
    /// Stacked `x̂_{k|k}`.
    pub estimate: DVector<T>,
    /// `P_{i,k|k}` per subsystem.
    pub covariances: Vec<DMatrix<T>>,
    /// `L_{i,k}` per subsystem (n_xi × n_y).
    pub gains: Vec<DMatrix<T>>,
    /// `A_{k-1}`; absent at `k = 0`.
    pub a_prev: Option<DMatrix<T>>,
    /// Point at which `A_{k-1}` was evaluated (`x̂_{k-1|k-1}`).
    pub a_point: Option<DVector<T>>,
    /// `C_k`.
    pub c: DMatrix<T>,
    /// Point at which `C_k` was evaluated (`x̂_{k|k-1}`).
    pub c_point: DVector<T>,
    /// Covariance floor events during this instant.
    pub floor_events: usize,
}

impl<T: Scalar> StepRecord<T> {
    /// Stacked gain `L_k` (n_x × n_y).
    pub fn stacked_gain(&self) -> DMatrix<T> {
        let cols = self.gains.first().map_or(0, |g| g.ncols());
        let rows: usize = self.gains.iter().map(|g| g.nrows()).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for g in &self.gains {
            out.rows_mut(r, g.nrows()).copy_from(g);
            r += g.nrows();
        }
        out
    }

    /// Block-diagonal `P_{k|k}`.
    pub fn covariance(&self) -> DMatrix<T> {
        block_diag(&self.covariances)
    }
}

/// A full filter run, `k = 0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRecord<T: Scalar> {
    pub partition: StatePartition,
    pub q_blocks: Vec<DMatrix<T>>,
    pub r: DMatrix<T>,
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Scalar> EstimationRecord<T> {
    pub fn estimates(&self) -> Vec<DVector<T>> {
        self.steps.iter().map(|s| s.estimate.clone()).collect()
    }

    pub fn floor_events(&self) -> usize {
        self.steps.iter().map(|s| s.floor_events).sum()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    pub fn q(&self) -> DMatrix<T> {
        block_diag(&self.q_blocks)
    }

}
