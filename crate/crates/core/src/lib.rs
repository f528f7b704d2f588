//! Partition-based distributed Kalman filtering.
//!
//! A plant is split into subsystems by a [`model::StatePartition`]. Each
//! subsystem runs a local filter that exchanges estimates with the others
//! through a frozen [`dkf::ExchangeSnapshot`] once per phase:
//!
//! * [`dkf`] is the linear filter, [`dekf`] its extended counterpart with
//!   successive relinearization;
//! * [`dfie`] holds batch full-information oracles and a classical Kalman filter
//!   used to cross-check the recursions;
//! * [`analysis`] evaluates the closed-loop error recursion and the numerical
//!   stability conditions over recorded runs.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the element type.

pub mod analysis;
pub mod benchmarks;
pub mod dekf;
pub mod dfie;
pub mod dkf;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod record;
mod scalar;
mod schedule;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use schedule::Schedule;

pub type LinearModel = model::LinearModel<f64>;
pub type NonlinearModel = model::NonlinearModel<f64>;
pub type Dkf = dkf::DistributedKalmanFilter<f64>;
pub type Dekf = dekf::DistributedEkf<f64>;
pub type Prior = dkf::Prior<f64>;
pub type Trajectory = simulate::Trajectory<f64>;
pub type NoiseSpec = simulate::NoiseSpec<f64>;
pub type EstimationRecord = record::EstimationRecord<f64>;

pub type LinearModel32 = model::LinearModel<f32>;
pub type NonlinearModel32 = model::NonlinearModel<f32>;
pub type Dkf32 = dkf::DistributedKalmanFilter<f32>;
pub type Dekf32 = dekf::DistributedEkf<f32>;
pub type Prior32 = dkf::Prior<f32>;
pub type Trajectory32 = simulate::Trajectory<f32>;
pub type NoiseSpec32 = simulate::NoiseSpec<f32>;
pub type EstimationRecord32 = record::EstimationRecord<f32>;
