//! Partitioned linear and nonlinear system models.

mod linear;
mod linearize;
mod nonlinear;
mod partition;

pub use linear::{assemble_global, LinearModel, LinearSubsystem};
pub use linearize::{
    dynamics_columns, dynamics_jacobian, fd_step, jacobian_rel_error, linearize, linearize_at, output_block,
    output_jacobian, transition_blocks, JacobianMode, LinearizationBlocks,
};
pub use nonlinear::{
    AffineDynamics, NonlinearModel, NonlinearSubsystem, StateBox, SubsystemDynamics, SPOT_CHECK_POINTS,
};
pub use partition::{make_partition, StatePartition};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::Scalar;

/// Common view of linear and nonlinear global models.
pub trait SystemModel<T: Scalar>: Send + Sync {
    fn partition(&self) -> &StatePartition;
    fn f(&self, x: &DVector<T>) -> Result<DVector<T>>;
    fn h(&self, x: &DVector<T>) -> Result<DVector<T>>;
    fn q(&self) -> &DMatrix<T>;
    fn r(&self) -> &DMatrix<T>;
    fn q_block(&self, i: usize) -> DMatrix<T>;
    fn state_box(&self) -> Option<&StateBox<T>> {
        None
    }
}

impl<T: Scalar> SystemModel<T> for LinearModel<T> {
    fn partition(&self) -> &StatePartition {
        LinearModel::partition(self)
    }

    fn f(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.partition().check_state(x, "state")?;
        Ok(LinearModel::f(self, x))
    }

    fn h(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.partition().check_state(x, "state")?;
        Ok(LinearModel::h(self, x))
    }

    fn q(&self) -> &DMatrix<T> {
        LinearModel::q(self)
    }

    fn r(&self) -> &DMatrix<T> {
        LinearModel::r(self)
    }

    fn q_block(&self, i: usize) -> DMatrix<T> {
        LinearModel::q_block(self, i).clone()
    }
}

impl<T: Scalar> SystemModel<T> for NonlinearModel<T> {
    fn partition(&self) -> &StatePartition {
        NonlinearModel::partition(self)
    }

    fn f(&self, x: &DVector<T>) -> Result<DVector<T>> {
        NonlinearModel::f(self, x)
    }

    fn h(&self, x: &DVector<T>) -> Result<DVector<T>> {
        NonlinearModel::h(self, x)
    }

    fn q(&self) -> &DMatrix<T> {
        NonlinearModel::q(self)
    }

    fn r(&self) -> &DMatrix<T> {
        NonlinearModel::r(self)
    }

    fn q_block(&self, i: usize) -> DMatrix<T> {
        NonlinearModel::q_block(self, i).clone()
    }

    fn state_box(&self) -> Option<&StateBox<T>> {
        NonlinearModel::state_box(self)
    }
}
