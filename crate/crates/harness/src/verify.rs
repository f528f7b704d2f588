//! Oracle-equivalence and reduction checks behind `distkf verify`.

use std::fmt;
use std::sync::Arc;

use distkf_core::analysis::error_recursion;
use distkf_core::dekf::run_dekf;
use distkf_core::dfie::{centralized_kf_init, centralized_kf_step, global_ekf_init, global_ekf_step, local_fie, LocalFieProblem, NeighborHistory};
use distkf_core::dkf::{run_dkf, Prior};
use distkf_core::model::{JacobianMode, LinearModel, NonlinearModel};
use distkf_core::Schedule;
use nalgebra::DVector;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::registry::{fixture, BuiltModel};
use crate::runner::{prepare, Estimator};

pub const FIE_TOL: f64 = 1e-8;
pub const REDUCTION_TOL: f64 = 1e-9;
pub const AFFINE_TOL: f64 = 1e-12;
pub const RECURSION_REL_TOL: f64 = 1e-12;
pub const REDUCTION_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Largest observed error, for numeric checks.
    pub max_error: Option<f64>,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.name, if self.passed { "PASS" } else { "FAIL" }, self.detail)
    }
}

fn check(name: &str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: worst <= tol,
        max_error: Some(worst),
        detail: format!("max error {worst:.3e}, tolerance {tol:.0e}"),
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn linear(config: &ExperimentConfig) -> Result<(LinearModel<f64>, Prior<f64>, Vec<DVector<f64>>, ExperimentConfig)> {
    let prep = prepare(config)?;
    let BuiltModel::Linear(m) = &prep.model else {
        return Err(HarnessError::Config(format!("`{}` is not a linear model", config.name)));
    };
    let steps = config.steps.max(REDUCTION_STEPS);
    let mut long = config.clone();
    long.steps = steps;
    let truth = prepare(&long)?.simulate(config.seed)?;
    Ok((m.clone(), prep.prior.clone(), truth.measurements, long))
}

/// Local FIE solutions equal the filter estimates for `k = 1..=5`.
pub fn fie_equivalence(m: &LinearModel<f64>, prior: &Prior<f64>, ys: &[DVector<f64>]) -> Result<CheckResult> {
    let ys = &ys[..=5];
    let rec = run_dkf(m, prior, ys, Schedule::Sequential)?;
    let history = NeighborHistory::filtered(&rec.estimates());
    let mut worst = 0.0f64;
    for k in 1..=5 {
        for i in 0..m.partition().n_subsystems() {
            let sol = local_fie(&LocalFieProblem { model: m, index: i, prior, measurements: &ys[..=k], history: &history })?;
            worst = worst.max(rel(sol.terminal(), &m.partition().local(&rec.steps[k].estimate, i)));
        }
    }
    Ok(check("DKF≡FIE k≤5", worst, FIE_TOL))
}

/// One-subsystem filter against the classical Kalman filter.
pub fn single_partition_kf(m: &LinearModel<f64>, prior: &Prior<f64>, ys: &[DVector<f64>]) -> Result<CheckResult> {
    let c = m.centralized()?;
    let prior = Prior::new(prior.mean.clone(), vec![prior.covariance()]);
    let rec = run_dkf(&c, &prior, ys, Schedule::Sequential)?;
    let mut kf = centralized_kf_init(&c, &prior.mean, &prior.covariance(), &ys[0])?;
    let mut worst = rel(&rec.steps[0].estimate, &kf.estimate);
    for k in 1..ys.len() {
        kf = centralized_kf_step(&c, &kf.estimate, &kf.covariance, &ys[k])?;
        worst = worst.max(rel(&rec.steps[k].estimate, &kf.estimate));
    }
    Ok(check("DKF n=1≡KF", worst, REDUCTION_TOL))
}

/// One-subsystem extended filter against the global EKF.
pub fn single_partition_ekf(m: &NonlinearModel<f64>, prior: &Prior<f64>, ys: &[DVector<f64>], mode: JacobianMode) -> Result<CheckResult> {
    let c = Arc::new(m.centralized()?);
    let prior = Prior::new(prior.mean.clone(), vec![prior.covariance()]);
    let rec = run_dekf(c.clone(), &prior, ys, mode, Schedule::Sequential)?;
    let mut ekf = global_ekf_init(&c, &prior.mean, &prior.covariance(), &ys[0], mode)?;
    let mut worst = rel(&rec.steps[0].estimate, &ekf.estimate);
    for k in 1..ys.len() {
        ekf = global_ekf_step(&c, &ekf.estimate, &ekf.covariance, &ys[k], mode)?;
        worst = worst.max(rel(&rec.steps[k].estimate, &ekf.estimate));
    }
    Ok(check("DEKF n=1≡EKF", worst, REDUCTION_TOL))
}

/// Extended filter on the affine wrapper against the linear filter.
pub fn affine_reduction(m: &LinearModel<f64>, prior: &Prior<f64>, ys: &[DVector<f64>]) -> Result<CheckResult> {
    let lin = run_dkf(m, prior, ys, Schedule::Sequential)?;
    let ext = run_dekf(Arc::new(NonlinearModel::from_linear(m)?), prior, ys, JacobianMode::Analytic, Schedule::Sequential)?;
    let worst = lin.steps.iter().zip(&ext.steps).map(|(a, b)| rel(&b.estimate, &a.estimate)).fold(0.0, f64::max);
    Ok(check("DEKF affine≡DKF", worst, AFFINE_TOL))
}

/// Recorded errors satisfy `e_k = F_k e_{k-1} + r_k + s_k`.
pub fn recursion_identity(config: &ExperimentConfig) -> Result<CheckResult> {
    let prep = prepare(config)?;
    let truth = prep.simulate(config.seed)?;
    let (rec, _) = prep.estimate(&truth.measurements)?;
    let steps = error_recursion(prep.model.system(), &truth, &rec)?;
    let worst = steps.iter().map(|d| d.relative_residual).fold(0.0, f64::max);
    Ok(check("error recursion identity", worst, RECURSION_REL_TOL))
}

/// Reversed-order and threaded schedules reproduce the sequential run bit for bit.
pub fn schedule_invariance(m: &LinearModel<f64>, prior: &Prior<f64>, ys: &[DVector<f64>]) -> Result<CheckResult> {
    let n = m.partition().n_subsystems();
    let base = run_dkf(m, prior, ys, Schedule::Sequential)?;
    let reversed = run_dkf(m, prior, ys, Schedule::Order((0..n).rev().collect()))?;
    let parallel = run_dkf(m, prior, ys, Schedule::Parallel)?;
    let same = base == reversed && base == parallel;
    Ok(CheckResult {
        name: "schedule invariance".to_string(),
        passed: same,
        max_error: None,
        detail: if same { "bitwise identical".into() } else { "outputs differ".into() },
    })
}

/// Runs every check; linear checks use `config`, extended-filter checks the reactor fixture.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<CheckResult>> {
    let (m, prior, ys, long) = linear(config)?;
    let mut out = vec![
        fie_equivalence(&m, &prior, &ys)?,
        single_partition_kf(&m, &prior, &ys)?,
        affine_reduction(&m, &prior, &ys)?,
        recursion_identity(&long)?,
        schedule_invariance(&m, &prior, &ys)?,
    ];
    let mut reactor = fixture("reactor-chain")?;
    reactor.steps = REDUCTION_STEPS;
    let prep = prepare(&reactor)?;
    let truth = prep.simulate(reactor.seed)?;
    if let Estimator::Dekf(rm) = &prep.estimator {
        out.push(single_partition_ekf(rm, &prep.prior, &truth.measurements, prep.jacobian)?);
    }
    Ok(out)
}
