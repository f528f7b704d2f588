//! Truth simulation, filtering and monitoring for one experiment run.

use std::sync::Arc;
use std::time::Instant;

use distkf_core::analysis::{
    check_assumption2, check_assumption4, check_prop2, error_recursion, lyapunov, lyapunov_ascents, remainder_bounds, rmse_sequence,
    MonitorStatus,
};
use distkf_core::dekf::DistributedEkf;
use distkf_core::dkf::{DistributedKalmanFilter, Prior};
use distkf_core::model::{JacobianMode, NonlinearModel, SystemModel};
use distkf_core::simulate::{simulate, NoiseSpec};
use distkf_core::{EstimationRecord, Schedule, Trajectory};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, Jacobian, Mode, ScheduleKind};
use crate::error::{HarnessError, Result};
use crate::record::{self, finite, BoundsData, MonitorRow, MonitorSummary, Monitors, RunRecord};
use crate::registry::{build_model, model_dims, BuiltModel};

/// Filter selected for a run.
#[derive(Debug, Clone)]
pub enum Estimator {
    Dkf(distkf_core::model::LinearModel<f64>),
    Dekf(Arc<NonlinearModel<f64>>),
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Dkf(_) => "dkf",
            Estimator::Dekf(_) => "dekf",
        }
    }
}

/// A validated config turned into ready-to-run objects.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: BuiltModel,
    pub estimator: Estimator,
    pub x0: DVector<f64>,
    pub prior: Prior<f64>,
    pub noise: NoiseSpec<f64>,
    pub jacobian: JacobianMode,
    pub schedule: Schedule,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let (dims, out_dims) = model_dims(&config.model)?;
    config.validate(dims.iter().sum(), out_dims.iter().sum())?;
    let model = build_model(&config.model, &config.estimator)?;
    let estimator = match (&model, config.mode) {
        (BuiltModel::Linear(m), Mode::Auto | Mode::Dkf) => Estimator::Dkf(m.clone()),
        (BuiltModel::Linear(m), Mode::Dekf) => Estimator::Dekf(Arc::new(NonlinearModel::from_linear(m)?)),
        (BuiltModel::Nonlinear(m), Mode::Auto | Mode::Dekf) => Estimator::Dekf(m.clone()),
        (BuiltModel::Nonlinear(_), Mode::Dkf) => {
            return Err(HarnessError::Config("mode `dkf` needs a linear model".into()));
        }
    };
    let e = &config.estimator;
    let prior = Prior::diagonal(DVector::from_column_slice(&e.prior_mean), model.partition(), &e.p0_diag);
    let n = &config.noise;
    let mut noise = NoiseSpec::gaussian(DVector::from_column_slice(&n.w_std), DVector::from_column_slice(&n.v_std), config.seed);
    if let Some(s) = n.bound_sigma {
        noise = noise.with_sigma_bound(s);
    }
    if let Some(b) = &n.w_bound {
        noise.w_bound = Some(DVector::from_column_slice(b));
    }
    if let Some(b) = &n.v_bound {
        noise.v_bound = Some(DVector::from_column_slice(b));
    }
    noise.validate(model.partition())?;
    Ok(Prepared {
        config: config.clone(),
        x0: DVector::from_column_slice(&config.x0),
        model,
        estimator,
        prior,
        noise,
        jacobian: match config.jacobian {
            Jacobian::Analytic => JacobianMode::Analytic,
            Jacobian::FiniteDifference => JacobianMode::FiniteDifference,
        },
        schedule: match config.schedule {
            ScheduleKind::Sequential => Schedule::Sequential,
            ScheduleKind::Parallel => Schedule::Parallel,
        },
    })
}

impl Prepared {
    pub fn simulate(&self, seed: u64) -> Result<Trajectory> {
        Ok(simulate(self.model.system(), &self.x0, self.config.steps, &self.noise.clone().with_seed(seed))?)
    }

    /// Runs the selected filter over the measurements, timing each instant.
    pub fn estimate(&self, measurements: &[DVector<f64>]) -> Result<(EstimationRecord, Vec<u64>)> {
        let mut wall = Vec::with_capacity(measurements.len());
        let mut steps = Vec::with_capacity(measurements.len());
        let y0 = &measurements[0];
        let (q_blocks, r) = match &self.estimator {
            Estimator::Dkf(m) => {
                let t = Instant::now();
                let (dkf, first) = DistributedKalmanFilter::initialize(m, &self.prior, y0)?;
                let mut dkf = dkf.with_schedule(self.schedule.clone());
                wall.push(t.elapsed().as_nanos() as u64);
                steps.push(first);
                for y in &measurements[1..] {
                    let t = Instant::now();
                    steps.push(dkf.step(y)?);
                    wall.push(t.elapsed().as_nanos() as u64);
                }
                (m.subsystems().iter().map(|s| s.q.clone()).collect(), m.r().clone())
            }
            Estimator::Dekf(m) => {
                let t = Instant::now();
                let (ekf, first) = DistributedEkf::initialize(m.clone(), &self.prior, y0, self.jacobian)?;
                let mut ekf = ekf.with_schedule(self.schedule.clone());
                wall.push(t.elapsed().as_nanos() as u64);
                steps.push(first);
                for y in &measurements[1..] {
                    let t = Instant::now();
                    steps.push(ekf.step(y)?);
                    wall.push(t.elapsed().as_nanos() as u64);
                }
                ((0..m.n_subsystems()).map(|i| m.q_block(i).clone()).collect(), m.r().clone())
            }
        };
        Ok((EstimationRecord { partition: self.model.partition().clone(), q_blocks, r, steps }, wall))
    }
}

/// Per-instant and summary monitors of a finished run.
pub fn compute_monitors(model: &dyn SystemModel<f64>, truth: &Trajectory, rec: &EstimationRecord) -> Result<Monitors> {
    let bounds = check_assumption2(rec)?;
    let prop2 = check_prop2(rec, &bounds)?;
    let recursion = error_recursion(model, truth, rec)?;
    let values = lyapunov(rec, &truth.states)?;
    let mut rows = Vec::with_capacity(rec.steps.len());
    let (mut sat, mut vio, mut unchecked) = (0, 0, 0);
    for k in 0..rec.steps.len() {
        let mut row = MonitorRow {
            k,
            a4_checked: false,
            a4_satisfied: false,
            a4_margin: None,
            f_ii_condition: None,
            prop2_holds: None,
            direct_alpha: None,
            lyapunov: finite(values[k]),
            recursion_residual: None,
            relative_residual: None,
        };
        if k > 0 {
            let report = check_assumption4(rec, k)?;
            match report.status {
                MonitorStatus::Satisfied => sat += 1,
                MonitorStatus::Violated => vio += 1,
                MonitorStatus::NotCheckable => unchecked += 1,
            }
            row.a4_checked = report.status != MonitorStatus::NotCheckable;
            row.a4_satisfied = report.status.is_satisfied();
            row.a4_margin = if row.a4_checked { finite(report.margin) } else { None };
            row.f_ii_condition = finite(report.max_condition);
            let c = &prop2.steps[k - 1];
            row.prop2_holds = Some(c.holds);
            row.direct_alpha = finite(c.direct_alpha);
            row.recursion_residual = finite(recursion[k - 1].residual);
            row.relative_residual = finite(recursion[k - 1].relative_residual);
        }
        rows.push(row);
    }
    let fits = remainder_bounds(&recursion);
    let max = |f: fn(&distkf_core::analysis::ErrorDecomposition<f64>) -> f64| recursion.iter().map(f).fold(0.0, f64::max);
    let threshold = match prop2.alpha {
        Some(a) if a > 0.0 => lyapunov_threshold(&recursion, rec, a),
        _ => f64::INFINITY,
    };
    let summary = MonitorSummary {
        bounds: BoundsData::from(&bounds),
        alpha: prop2.alpha,
        min_direct_alpha: finite(prop2.min_direct_alpha()),
        prop2_holds: prop2.holds(),
        a4_satisfied: sat,
        a4_violated: vio,
        a4_not_checkable: unchecked,
        max_recursion_residual: finite(max(|d| d.residual)),
        max_relative_residual: finite(max(|d| d.relative_residual)),
        eps_dynamics: finite(fits.dynamics.epsilon),
        eps_dynamics_residual: finite(fits.dynamics.residual),
        eps_output: finite(fits.output.epsilon),
        eps_output_residual: finite(fits.output.residual),
        lyapunov_ascents: lyapunov_ascents(&values, threshold).len(),
        floor_events: rec.floor_events(),
    };
    Ok(Monitors { rows, summary })
}

/// `4κ/α` with `κ` the largest observed noise term `s_kᵀ Π_k s_k`.
fn lyapunov_threshold(recursion: &[distkf_core::analysis::ErrorDecomposition<f64>], rec: &EstimationRecord, alpha: f64) -> f64 {
    let kappa = recursion
        .iter()
        .filter_map(|d| {
            let pi = rec.steps[d.k].covariance().try_inverse()?;
            Some(d.s.dot(&(pi * &d.s)))
        })
        .fold(0.0, f64::max);
    4.0 * kappa / alpha
}

/// Simulates, filters and monitors one run with the given seed.
pub fn run_seeded(prep: &Prepared, seed: u64) -> Result<RunRecord> {
    let truth = prep.simulate(seed)?;
    let (rec, wall) = prep.estimate(&truth.measurements)?;
    let monitors = if prep.config.monitors { Some(compute_monitors(prep.model.system(), &truth, &rec)?) } else { None };
    let rmse = rmse_sequence(&rec.estimates(), &truth.states);
    let p = &rec.partition;
    RunRecord {
        schema_version: record::SCHEMA_VERSION,
        config: prep.config.clone(),
        config_hash: record::config_hash(&prep.config)?,
        seed,
        estimator: prep.estimator.name().to_string(),
        dims: p.dims().to_vec(),
        out_dims: p.out_dims().to_vec(),
        q_blocks: rec.q_blocks.iter().map(record::mat).collect(),
        r: record::mat(&rec.r),
        trajectory: record::trajectory_data(&truth),
        steps: rec.steps.iter().map(record::step_data).collect(),
        rmse,
        monitors,
        wall_clock_ns: wall,
        content_hash: String::new(),
    }
    .seal()
}

/// Runs the experiment once with the configured seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let prep = prepare(config)?;
    run_seeded(&prep, config.seed)
}

/// Recomputes the monitors of a stored record from its embedded config.
pub fn reanalyze(record: &RunRecord) -> Result<Monitors> {
    let model = build_model(&record.config.model, &record.config.estimator)?;
    compute_monitors(model.system(), &record.to_trajectory(), &record.to_estimation_record()?)
}
