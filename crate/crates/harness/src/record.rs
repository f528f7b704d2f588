//! Serializable run records.

use distkf_core::analysis::BoundsTable;
use distkf_core::model::{make_partition, StatePartition};
use distkf_core::record::StepRecord;
use distkf_core::{EstimationRecord, Trajectory};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Row-major matrix.
pub type Mat = Vec<Vec<f64>>;

pub fn mat(m: &DMatrix<f64>) -> Mat {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn to_matrix(m: &Mat) -> Result<DMatrix<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::Record("ragged matrix".into()));
    }
    Ok(DMatrix::from_row_iterator(rows, cols, m.iter().flatten().copied()))
}

pub fn to_vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// `None` for non-finite values, which JSON cannot carry.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryData {
    pub states: Vec<Vec<f64>>,
    pub measurements: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepData {
    pub k: usize,
    pub prediction: Vec<f64>,
    pub estimate: Vec<f64>,
    pub covariances: Vec<Mat>,
    pub gains: Vec<Mat>,
    pub a_prev: Option<Mat>,
    pub a_point: Option<Vec<f64>>,
    pub c: Mat,
    pub c_point: Vec<f64>,
    pub floor_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub k: usize,
    pub a4_checked: bool,
    pub a4_satisfied: bool,
    pub a4_margin: Option<f64>,
    pub f_ii_condition: Option<f64>,
    pub prop2_holds: Option<bool>,
    pub direct_alpha: Option<f64>,
    pub lyapunov: Option<f64>,
    pub recursion_residual: Option<f64>,
    pub relative_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsData {
    pub a_diag: [Option<f64>; 2],
    pub a_cross_max: Option<f64>,
    pub c: [Option<f64>; 2],
    pub p: [Option<f64>; 2],
    pub q: [Option<f64>; 2],
    pub r: [Option<f64>; 2],
    pub l: [Option<f64>; 2],
    pub f_upper: Option<f64>,
    pub f_observed: Option<f64>,
    pub satisfied: bool,
}

impl From<&BoundsTable> for BoundsData {
    fn from(b: &BoundsTable) -> Self {
        let pair = |p: (f64, f64)| [finite(p.0), finite(p.1)];
        Self {
            a_diag: pair(b.a_diag),
            a_cross_max: finite(b.a_cross_max),
            c: pair(b.c),
            p: pair(b.p),
            q: pair(b.q),
            r: pair(b.r),
            l: pair(b.l),
            f_upper: finite(b.f_upper()),
            f_observed: finite(b.f_observed),
            satisfied: b.satisfied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub bounds: BoundsData,
    pub alpha: Option<f64>,
    pub min_direct_alpha: Option<f64>,
    pub prop2_holds: bool,
    pub a4_satisfied: usize,
    pub a4_violated: usize,
    pub a4_not_checkable: usize,
    pub max_recursion_residual: Option<f64>,
    pub max_relative_residual: Option<f64>,
    pub eps_dynamics: Option<f64>,
    pub eps_dynamics_residual: Option<f64>,
    pub eps_output: Option<f64>,
    pub eps_output_residual: Option<f64>,
    pub lyapunov_ascents: usize,
    pub floor_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    pub rows: Vec<MonitorRow>,
    pub summary: MonitorSummary,
}

/// Everything one experiment run produced; replayable from the embedded config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub estimator: String,
    pub dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub q_blocks: Vec<Mat>,
    pub r: Mat,
    pub trajectory: TrajectoryData,
    pub steps: Vec<StepData>,
    pub rmse: Vec<f64>,
    pub monitors: Option<Monitors>,
    /// Per-instant wall-clock time in nanoseconds; not covered by the content hash.
    pub wall_clock_ns: Vec<u64>,
    pub content_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

impl RunRecord {
    /// SHA-256 of the record with wall-clock times and the hash field blanked.
    pub fn compute_hash(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.wall_clock_ns.clear();
        blank.content_hash.clear();
        Ok(sha256_hex(&serde_json::to_vec(&blank)?))
    }

    pub fn seal(mut self) -> Result<Self> {
        self.content_hash = self.compute_hash()?;
        Ok(self)
    }

    pub fn partition(&self) -> Result<StatePartition> {
        Ok(make_partition(&self.dims, &self.out_dims)?)
    }

    pub fn to_trajectory(&self) -> Trajectory {
        let vs = |v: &Vec<Vec<f64>>| v.iter().map(|x| to_vector(x)).collect();
        Trajectory {
            states: vs(&self.trajectory.states),
            measurements: vs(&self.trajectory.measurements),
            process_noise: vs(&self.trajectory.process_noise),
            measurement_noise: vs(&self.trajectory.measurement_noise),
            seed: self.seed,
        }
    }

    pub fn to_estimation_record(&self) -> Result<EstimationRecord> {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                Ok(StepRecord {
                    k: s.k,
                    prediction: to_vector(&s.prediction),
                    estimate: to_vector(&s.estimate),
                    covariances: s.covariances.iter().map(to_matrix).collect::<Result<_>>()?,
                    gains: s.gains.iter().map(to_matrix).collect::<Result<_>>()?,
                    a_prev: s.a_prev.as_ref().map(to_matrix).transpose()?,
                    a_point: s.a_point.as_deref().map(to_vector),
                    c: to_matrix(&s.c)?,
                    c_point: to_vector(&s.c_point),
                    floor_events: s.floor_events,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimationRecord {
            partition: self.partition()?,
            q_blocks: self.q_blocks.iter().map(to_matrix).collect::<Result<_>>()?,
            r: to_matrix(&self.r)?,
            steps,
        })
    }
}

pub fn trajectory_data(t: &Trajectory) -> TrajectoryData {
    let vs = |v: &[DVector<f64>]| v.iter().map(vec_of).collect();
    TrajectoryData {
        states: vs(&t.states),
        measurements: vs(&t.measurements),
        process_noise: vs(&t.process_noise),
        measurement_noise: vs(&t.measurement_noise),
    }
}

pub fn step_data(s: &StepRecord<f64>) -> StepData {
    StepData {
        k: s.k,
        prediction: vec_of(&s.prediction),
        estimate: vec_of(&s.estimate),
        covariances: s.covariances.iter().map(mat).collect(),
        gains: s.gains.iter().map(mat).collect(),
        a_prev: s.a_prev.as_ref().map(mat),
        a_point: s.a_point.as_ref().map(vec_of),
        c: mat(&s.c),
        c_point: vec_of(&s.c_point),
        floor_events: s.floor_events,
    }
}
