//! Distributed extended Kalman filter.
//!
//! Per instant `k`, agent `i`:
//!
//! 1. reads the posteriors `x̂_{k-1|k-1}` and predicts `x̂ⁱ_{k|k-1} = f_i(x̂ⁱ, X̂ⁱ)`;
//!    it also linearizes the dynamics at the stacked posterior to get `A_[:,i],k-1`;
//! 2. reads the stacked prediction and `y_k`, linearizes the outputs there to get
//!    `C_k`, computes `L_{i,k}`, `P_{i,k|k}` with the shared kernel and updates with
//!    the innovation `y_k − h(x̂_{k|k-1})`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dkf::{EstimatorState, ExchangeSnapshot, Prior};
use crate::error::{Error, Result};
use crate::kernel::{self, LocalBlocks};
use crate::linalg::{hstack, stack};
use crate::model::{dynamics_columns, output_jacobian, JacobianMode, LinearizationBlocks, NonlinearModel, StatePartition};
use crate::record::{EstimationRecord, StepRecord};
use crate::schedule::Schedule;
use crate::Scalar;

/// Linearization contributions an agent computed at its latest instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBlocks<T: Scalar> {
    pub k: usize,
    /// `A_[:,i],k-1`, evaluated at `a_point`.
    pub a_col: DMatrix<T>,
    pub a_point: DVector<T>,
    /// `C_k`, evaluated at `c_point`.
    pub c: DMatrix<T>,
    pub c_point: DVector<T>,
}

/// Outcome of the gain/covariance stage of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCovariance<T: Scalar> {
    pub gain: DMatrix<T>,
    pub covariance: DMatrix<T>,
    pub floor_fired: bool,
}

/// One local extended Kalman filter.
#[derive(Debug, Clone)]
pub struct DekfAgent<T: Scalar> {
    pub index: usize,
    model: Arc<NonlinearModel<T>>,
    mode: JacobianMode,
    pub state: EstimatorState<T>,
    pub blocks: Option<AgentBlocks<T>>,
}

impl<T: Scalar> DekfAgent<T> {
    /// Measurement update of the prior at `k = 0`, linearizing `h` at the prior mean.
    pub fn initialize(model: Arc<NonlinearModel<T>>, index: usize, prior: &Prior<T>, y0: &DVector<T>, mode: JacobianMode) -> Result<(Self, bool)> {
        let p = model.partition();
        let c = output_jacobian(&model, &prior.mean, mode)?;
        let c_col = c.columns(p.offset(index), p.dim(index)).into_owned();
        let (gain, mut covariance) = kernel::prior_update(&prior.covariances[index], &c_col, model.r(), index)?;
        let fired = kernel::apply_floor(&mut covariance);
        let covariance = kernel::checked(covariance, index, 0)?;
        let innovation = y0 - model.h(&prior.mean)?;
        let estimate = p.local(&prior.mean, index) + &gain * innovation;
        let state = EstimatorState { index, k: 0, estimate, covariance, gain };
        let blocks = AgentBlocks { k: 0, a_col: DMatrix::zeros(0, 0), a_point: DVector::zeros(0), c, c_point: prior.mean.clone() };
        Ok((Self { index, model, mode, state, blocks: Some(blocks) }, fired))
    }

    fn partition(&self) -> &StatePartition {
        self.model.partition()
    }

    /// `x̂ⁱ_{k|k-1}` and `A_[:,i],k-1` from the snapshot of posteriors.
    pub fn predict(&self, snapshot: &ExchangeSnapshot<T>) -> Result<(DVector<T>, DMatrix<T>)> {
        let point = snapshot.stacked_posterior(self.partition())?;
        let prediction = self.model.f_local(self.index, &point)?;
        let a_col = dynamics_columns(&self.model, self.index, &point, self.mode)?;
        Ok((prediction, a_col))
    }

    /// `L_{i,k}` and `P_{i,k|k}` from `P_{i,k-1|k-1}` and the instant's linearization.
    pub fn gain_cov(&self, p: &DMatrix<T>, blocks: &LinearizationBlocks<T>) -> Result<GainCovariance<T>> {
        let i = self.index;
        let a_col = blocks.a_cols(i);
        let a_ii = blocks.a_block(i, i);
        let c_col = blocks.c_cols(i);
        self.gain_cov_from(p, &a_ii, &a_col, &blocks.c, &c_col, blocks.k)
    }

    fn gain_cov_from(
        &self,
        p: &DMatrix<T>,
        a_ii: &DMatrix<T>,
        a_col: &DMatrix<T>,
        c: &DMatrix<T>,
        c_col: &DMatrix<T>,
        k: usize,
    ) -> Result<GainCovariance<T>> {
        let i = self.index;
        let b = LocalBlocks { a_ii, a_col, c, c_col, q: self.model.q_block(i), r: self.model.r() };
        let terms = kernel::innovation_terms(b, p);
        let gain = kernel::gain(&terms, i, k)?;
        let raw = crate::linalg::symmetrize(&(-(&gain * &terms.z) + (a_ii * p * a_ii.transpose() + b.q)));
        let mut covariance = raw;
        let floor_fired = kernel::apply_floor(&mut covariance);
        let covariance = kernel::checked(covariance, i, k)?;
        Ok(GainCovariance { gain, covariance, floor_fired })
    }

    /// `x̂ⁱ_{k|k} = x̂ⁱ_{k|k-1} + L_{i,k}(y_k − h(x̂_{k|k-1}))`.
    pub fn update(&self, prediction: &DVector<T>, snapshot: &ExchangeSnapshot<T>, gain: &DMatrix<T>) -> Result<DVector<T>> {
        let stacked = snapshot.stacked_prediction(self.partition())?;
        let innovation = snapshot.measurement()? - self.model.h(&stacked)?;
        Ok(prediction + gain * innovation)
    }
}

/// Orchestrator running all agents with a two-phase barrier per instant.
#[derive(Debug, Clone)]
pub struct DistributedEkf<T: Scalar> {
    model: Arc<NonlinearModel<T>>,
    agents: Vec<DekfAgent<T>>,
    schedule: Schedule,
    k: usize,
}

impl<T: Scalar> DistributedEkf<T> {
    pub fn initialize(model: Arc<NonlinearModel<T>>, prior: &Prior<T>, y0: &DVector<T>, mode: JacobianMode) -> Result<(Self, StepRecord<T>)> {
        let p = model.partition().clone();
        prior.validate(&p)?;
        p.check_output(y0, "y_0")?;
        let mut floor_events = 0;
        let mut agents = Vec::with_capacity(p.n_subsystems());
        for i in 0..p.n_subsystems() {
            let (agent, fired) = DekfAgent::initialize(model.clone(), i, prior, y0, mode)?;
            floor_events += usize::from(fired);
            agents.push(agent);
        }
        let c = agents[0].blocks.as_ref().map(|b| b.c.clone()).unwrap_or_default();
        let ekf = Self { model, agents, schedule: Schedule::Sequential, k: 0 };
        let record = StepRecord {
            k: 0,
            prediction: prior.mean.clone(),
            estimate: ekf.estimate(),
            covariances: ekf.covariances(),
            gains: ekf.agents.iter().map(|a| a.state.gain.clone()).collect(),
            a_prev: None,
            a_point: None,
            c,
            c_point: prior.mean.clone(),
            floor_events,
        };
        Ok((ekf, record))
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn agents(&self) -> &[DekfAgent<T>] {
        &self.agents
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn estimate(&self) -> DVector<T> {
        stack(&self.agents.iter().map(|a| a.state.estimate.clone()).collect::<Vec<_>>())
    }

    pub fn covariances(&self) -> Vec<DMatrix<T>> {
        self.agents.iter().map(|a| a.state.covariance.clone()).collect()
    }

    pub fn step(&mut self, y: &DVector<T>) -> Result<StepRecord<T>> {
        let p = self.model.partition().clone();
        p.check_output(y, "measurement")?;
        let k = self.k + 1;
        let states: Vec<_> = self.agents.iter().map(|a| a.state.clone()).collect();
        let snapshot = ExchangeSnapshot::from_states(k, &states);
        let phase1 = self.schedule.run(self.agents.len(), |i| self.agents[i].predict(&snapshot));
        let (predictions, a_cols): (Vec<_>, Vec<_>) = phase1.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        let snapshot = snapshot.with_predictions(predictions, y.clone());
        let a_point = stack(&snapshot.posteriors);
        let c_point = stack(&snapshot.predictions);

        let phase2 = self.schedule.run(self.agents.len(), |i| -> Result<(DMatrix<T>, GainCovariance<T>, DVector<T>)> {
            let agent = &self.agents[i];
            let c = output_jacobian(&self.model, &c_point, agent.mode)?;
            let c_col = c.columns(p.offset(i), p.dim(i)).into_owned();
            let a_ii = a_cols[i].rows(p.offset(i), p.dim(i)).into_owned();
            let gc = agent.gain_cov_from(&agent.state.covariance, &a_ii, &a_cols[i], &c, &c_col, k)?;
            let estimate = agent.update(&snapshot.predictions[i], &snapshot, &gc.gain)?;
            Ok((c, gc, estimate))
        });
        let phase2 = phase2.into_iter().collect::<Result<Vec<_>>>()?;

        let mut floor_events = 0;
        let mut c_global = None;
        for (i, (c, gc, estimate)) in phase2.into_iter().enumerate() {
            floor_events += usize::from(gc.floor_fired);
            let agent = &mut self.agents[i];
            agent.state = EstimatorState { index: i, k, estimate, covariance: gc.covariance, gain: gc.gain };
            agent.blocks = Some(AgentBlocks { k, a_col: a_cols[i].clone(), a_point: a_point.clone(), c: c.clone(), c_point: c_point.clone() });
            c_global.get_or_insert(c);
        }
        self.k = k;
        Ok(StepRecord {
            k,
            prediction: c_point.clone(),
            estimate: self.estimate(),
            covariances: self.covariances(),
            gains: self.agents.iter().map(|a| a.state.gain.clone()).collect(),
            a_prev: Some(hstack(p.state_dim(), &a_cols)),
            a_point: Some(a_point),
            c: c_global.unwrap_or_else(|| DMatrix::zeros(p.output_dim(), p.state_dim())),
            c_point,
            floor_events,
        })
    }
}

/// Runs the extended filter over `y_0..y_K`; aborts with the step index on covariance collapse.
pub fn run_dekf<T: Scalar>(
    model: Arc<NonlinearModel<T>>,
    prior: &Prior<T>,
    measurements: &[DVector<T>],
    mode: JacobianMode,
    schedule: Schedule,
) -> Result<EstimationRecord<T>> {
    let y0 = measurements.first().ok_or_else(|| Error::MissingRecord("measurement y_0".into()))?;
    let (ekf, first) = DistributedEkf::initialize(model.clone(), prior, y0, mode)?;
    let mut ekf = ekf.with_schedule(schedule);
    let mut steps = Vec::with_capacity(measurements.len());
    steps.push(first);
    for y in &measurements[1..] {
        steps.push(ekf.step(y)?);
    }
    Ok(EstimationRecord {
        partition: model.partition().clone(),
        q_blocks: model.subsystems().iter().map(|s| s.q.clone()).collect(),
        r: model.r().clone(),
        steps,
    })
}
