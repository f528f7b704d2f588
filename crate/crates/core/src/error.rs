use thiserror::Error;

/// Errors raised by model construction, simulation, estimation and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("subsystem {index}: {what} is not symmetric positive definite")]
    NotSpd { index: usize, what: &'static str },

    #[error("subsystem index {0} is duplicated or out of range")]
    SubsystemIndex(usize),

    #[error("output matrix has a nonzero block coupling output {row} to state block {col}")]
    OutputCoupling { row: usize, col: usize },

    #[error("non-finite value in subsystem {index} while evaluating {what}")]
    NonFinite { index: usize, what: &'static str },

    #[error("linearization failed in subsystem {index}: {reason}")]
    Linearization { index: usize, reason: String },

    #[error("analytic Jacobian of subsystem {index} disagrees with finite differences (relative error {rel_err:e})")]
    JacobianMismatch { index: usize, rel_err: f64 },

    #[error("state left the validity box at step {step} (coordinate {coord})")]
    OutOfBox { step: usize, coord: usize },

    #[error("invalid noise specification: {0}")]
    Noise(String),

    #[error("rejection sampling exceeded {redraws} redraws at coordinate {coord}; bound too tight")]
    NoiseBound { coord: usize, redraws: usize },

    #[error("exchange snapshot is missing the entry of subsystem {0}")]
    MissingNeighbor(usize),

    #[error("innovation covariance of subsystem {index} is not positive definite at k={k}")]
    InnovationNotSpd { index: usize, k: usize },

    #[error("covariance of subsystem {index} lost positive definiteness at k={k}")]
    CovarianceCollapse { index: usize, k: usize },

    #[error("KKT system is singular")]
    SingularKkt,

    #[error("neighbor history is missing lag {lag}")]
    MissingLag { lag: usize },

    #[error("record is missing {0}")]
    MissingRecord(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
