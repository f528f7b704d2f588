//! Partition-based distributed Kalman filter for linear models.
//!
//! Each local filter `i` keeps `x̂ⁱ`, `P_i` and reads every neighbor quantity
//! from an [`ExchangeSnapshot`] frozen at the start of a phase:
//!
//! ```text
//! x̂ⁱ_{k|k-1} = A_ii x̂ⁱ_{k-1|k-1} + Σ_l A_il x̂ˡ_{k-1|k-1}
//! x̂ⁱ_{k|k}   = x̂ⁱ_{k|k-1} + L_{i,k} (y_k − Σ_l C_[:,l] x̂ˡ_{k|k-1})
//! ```
//!
//! with `L_{i,k}` and `P_{i,k|k}` from [`crate::kernel`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{self, LocalBlocks};
use crate::linalg::{is_spd, stack};
use crate::model::{LinearModel, StatePartition};
use crate::record::{EstimationRecord, StepRecord};
use crate::schedule::Schedule;
use crate::Scalar;

/// Prior `x̂_{0|-1}` and `P_{i,0|-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior<T: Scalar> {
    pub mean: DVector<T>,
    pub covariances: Vec<DMatrix<T>>,
}

impl<T: Scalar> Prior<T> {
    pub fn new(mean: DVector<T>, covariances: Vec<DMatrix<T>>) -> Self {
        Self { mean, covariances }
    }

    /// `P_{i,0|-1} = variance · I` for every subsystem.
    pub fn isotropic(mean: DVector<T>, partition: &StatePartition, variance: f64) -> Self {
        let covariances = partition.dims().iter().map(|&d| DMatrix::identity(d, d) * T::of(variance)).collect();
        Self { mean, covariances }
    }

    /// Diagonal `P_{i,0|-1}` from per-coordinate variances.
    pub fn diagonal(mean: DVector<T>, partition: &StatePartition, variances: &[f64]) -> Self {
        let covariances = (0..partition.n_subsystems())
            .map(|i| DMatrix::from_diagonal(&DVector::from_iterator(partition.dim(i), variances[partition.range(i)].iter().map(|&v| T::of(v)))))
            .collect();
        Self { mean, covariances }
    }

    pub fn validate(&self, partition: &StatePartition) -> Result<()> {
        partition.check_state(&self.mean, "prior mean")?;
        if self.covariances.len() != partition.n_subsystems() {
            return Err(Error::Dimension("one prior covariance per subsystem required".into()));
        }
        for (i, p) in self.covariances.iter().enumerate() {
            if p.shape() != (partition.dim(i), partition.dim(i)) || !is_spd(p) {
                return Err(Error::NotSpd { index: i, what: "P_{i,0|-1}" });
            }
        }
        Ok(())
    }

    /// Block-diagonal global prior covariance.
    pub fn covariance(&self) -> DMatrix<T> {
        crate::linalg::block_diag(&self.covariances)
    }
}

/// Local estimate, covariance and gain of subsystem `index` at instant `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState<T: Scalar> {
    pub index: usize,
    pub k: usize,
    pub estimate: DVector<T>,
    pub covariance: DMatrix<T>,
    pub gain: DMatrix<T>,
}

/// Quantities exchanged between local filters during one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeSnapshot<T: Scalar> {
    pub k: usize,
    /// `x̂ˡ_{k-1|k-1}` for every subsystem.
    pub posteriors: Vec<DVector<T>>,
    /// `x̂ˡ_{k|k-1}` for every subsystem, once the prediction phase finished.
    pub predictions: Vec<DVector<T>>,
    /// Global `y_k`, broadcast to every local filter.
    pub measurement: Option<DVector<T>>,
}

impl<T: Scalar> ExchangeSnapshot<T> {
    /// Snapshot of posteriors entering instant `k`.
    pub fn from_states(k: usize, states: &[EstimatorState<T>]) -> Self {
        Self { k, posteriors: states.iter().map(|s| s.estimate.clone()).collect(), predictions: Vec::new(), measurement: None }
    }

    pub fn with_predictions(mut self, predictions: Vec<DVector<T>>, y: DVector<T>) -> Self {
        self.predictions = predictions;
        self.measurement = Some(y);
        self
    }

    pub fn posterior(&self, l: usize) -> Result<&DVector<T>> {
        self.posteriors.get(l).ok_or(Error::MissingNeighbor(l))
    }

    pub fn prediction(&self, l: usize) -> Result<&DVector<T>> {
        self.predictions.get(l).ok_or(Error::MissingNeighbor(l))
    }

    pub fn measurement(&self) -> Result<&DVector<T>> {
        self.measurement.as_ref().ok_or_else(|| Error::MissingRecord(format!("measurement y_{}", self.k)))
    }

    pub fn stacked_posterior(&self, partition: &StatePartition) -> Result<DVector<T>> {
        check_entries(&self.posteriors, partition)?;
        Ok(stack(&self.posteriors))
    }

    pub fn stacked_prediction(&self, partition: &StatePartition) -> Result<DVector<T>> {
        check_entries(&self.predictions, partition)?;
        Ok(stack(&self.predictions))
    }
}

fn check_entries<T: Scalar>(entries: &[DVector<T>], partition: &StatePartition) -> Result<()> {
    for i in 0..partition.n_subsystems() {
        match entries.get(i) {
            Some(v) if v.len() == partition.dim(i) => {}
            _ => return Err(Error::MissingNeighbor(i)),
        }
    }
    Ok(())
}

/// Local filter of subsystem `index`, holding the global `C` and the column blocks it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalKalmanFilter<T: Scalar> {
    pub index: usize,
    a_ii: DMatrix<T>,
    couplings: Vec<(usize, DMatrix<T>)>,
    a_col: DMatrix<T>,
    c: DMatrix<T>,
    c_cols: Vec<DMatrix<T>>,
    q: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: Scalar> LocalKalmanFilter<T> {
    pub fn new(model: &LinearModel<T>, index: usize) -> Self {
        let sub = &model.subsystems()[index];
        let n = model.partition().n_subsystems();
        Self {
            index,
            a_ii: sub.a_ii.clone(),
            couplings: sub.couplings.iter().map(|(&l, a)| (l, a.clone())).collect(),
            a_col: model.a_cols(index),
            c: model.c().clone(),
            c_cols: (0..n).map(|l| model.c_cols(l)).collect(),
            q: sub.q.clone(),
            r: model.r().clone(),
        }
    }

    fn blocks(&self) -> LocalBlocks<'_, T> {
        LocalBlocks {
            a_ii: &self.a_ii,
            a_col: &self.a_col,
            c: &self.c,
            c_col: &self.c_cols[self.index],
            q: &self.q,
            r: &self.r,
        }
    }

    /// `x̂ⁱ_{k|k-1}` from the snapshot of posteriors.
    pub fn predict(&self, snapshot: &ExchangeSnapshot<T>) -> Result<DVector<T>> {
        let mut x = &self.a_ii * snapshot.posterior(self.index)?;
        for (l, a_il) in &self.couplings {
            x += a_il * snapshot.posterior(*l)?;
        }
        Ok(x)
    }

    /// `L_{i,k}` from `P_{i,k-1|k-1}`.
    pub fn gain(&self, p: &DMatrix<T>, k: usize) -> Result<DMatrix<T>> {
        kernel::gain(&kernel::innovation_terms(self.blocks(), p), self.index, k)
    }

    /// `x̂ⁱ_{k|k}` using every subsystem's prediction and the global measurement.
    pub fn update(&self, prediction: &DVector<T>, snapshot: &ExchangeSnapshot<T>, gain: &DMatrix<T>) -> Result<DVector<T>> {
        let mut innovation = snapshot.measurement()? - &self.c_cols[self.index] * prediction;
        for (l, c_l) in self.c_cols.iter().enumerate() {
            if l != self.index {
                innovation -= c_l * snapshot.prediction(l)?;
            }
        }
        Ok(prediction + gain * innovation)
    }

    /// `P_{i,k|k}` from `P_{i,k-1|k-1}` and `L_{i,k}`.
    pub fn covariance(&self, p: &DMatrix<T>, gain: &DMatrix<T>, k: usize) -> Result<DMatrix<T>> {
        let terms = kernel::innovation_terms(self.blocks(), p);
        kernel::covariance(self.blocks(), p, gain, &terms.z, self.index, k)
    }

    /// Gain and covariance sharing one evaluation of the innovation terms.
    pub fn gain_covariance(&self, p: &DMatrix<T>, k: usize) -> Result<(DMatrix<T>, DMatrix<T>)> {
        let terms = kernel::innovation_terms(self.blocks(), p);
        let l = kernel::gain(&terms, self.index, k)?;
        let next = kernel::covariance(self.blocks(), p, &l, &terms.z, self.index, k)?;
        Ok((l, next))
    }

    /// Measurement update of the prior at `k = 0`, with the innovation formed
    /// from every subsystem's prior mean.
    pub fn initialize(&self, prior: &Prior<T>, partition: &StatePartition, y0: &DVector<T>) -> Result<EstimatorState<T>> {
        let i = self.index;
        let (l, p) = kernel::prior_update(&prior.covariances[i], &self.c_cols[i], &self.r, i)?;
        let innovation = y0 - &self.c * &prior.mean;
        let estimate = partition.local(&prior.mean, i) + &l * innovation;
        Ok(EstimatorState { index: i, k: 0, estimate, covariance: p, gain: l })
    }
}

/// One-instant orchestrator over all local filters of a linear model.
#[derive(Debug, Clone)]
pub struct DistributedKalmanFilter<T: Scalar> {
    partition: StatePartition,
    filters: Vec<LocalKalmanFilter<T>>,
    states: Vec<EstimatorState<T>>,
    a: DMatrix<T>,
    c: DMatrix<T>,
    schedule: Schedule,
    k: usize,
}

impl<T: Scalar> DistributedKalmanFilter<T> {
    /// Builds the local filters and applies the `k = 0` measurement update.
    pub fn initialize(model: &LinearModel<T>, prior: &Prior<T>, y0: &DVector<T>) -> Result<(Self, StepRecord<T>)> {
        let p = model.partition();
        prior.validate(p)?;
        p.check_output(y0, "y_0")?;
        let filters: Vec<_> = (0..p.n_subsystems()).map(|i| LocalKalmanFilter::new(model, i)).collect();
        let states = filters.iter().map(|f| f.initialize(prior, p, y0)).collect::<Result<Vec<_>>>()?;
        let dkf = Self {
            partition: p.clone(),
            filters,
            states,
            a: model.a().clone(),
            c: model.c().clone(),
            schedule: Schedule::Sequential,
            k: 0,
        };
        let record = StepRecord {
            k: 0,
            prediction: prior.mean.clone(),
            estimate: dkf.estimate(),
            covariances: dkf.covariances(),
            gains: dkf.states.iter().map(|s| s.gain.clone()).collect(),
            a_prev: None,
            a_point: None,
            c: dkf.c.clone(),
            c_point: prior.mean.clone(),
            floor_events: 0,
        };
        Ok((dkf, record))
    }

    /// Resumes from explicit local states.
    pub fn from_states(model: &LinearModel<T>, states: Vec<EstimatorState<T>>) -> Result<Self> {
        let p = model.partition();
        if states.len() != p.n_subsystems() || states.iter().enumerate().any(|(i, s)| s.index != i) {
            return Err(Error::Dimension("one estimator state per subsystem, in index order".into()));
        }
        let k = states[0].k;
        Ok(Self {
            partition: p.clone(),
            filters: (0..p.n_subsystems()).map(|i| LocalKalmanFilter::new(model, i)).collect(),
            states,
            a: model.a().clone(),
            c: model.c().clone(),
            schedule: Schedule::Sequential,
            k,
        })
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn filters(&self) -> &[LocalKalmanFilter<T>] {
        &self.filters
    }

    pub fn states(&self) -> &[EstimatorState<T>] {
        &self.states
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn estimate(&self) -> DVector<T> {
        stack(&self.states.iter().map(|s| s.estimate.clone()).collect::<Vec<_>>())
    }

    pub fn covariances(&self) -> Vec<DMatrix<T>> {
        self.states.iter().map(|s| s.covariance.clone()).collect()
    }

    /// Advances to `k + 1` with measurement `y`: exchange, predict all, exchange,
    /// then gain, update and covariance for all.
    pub fn step(&mut self, y: &DVector<T>) -> Result<StepRecord<T>> {
        self.partition.check_output(y, "measurement")?;
        let k = self.k + 1;
        let snapshot = ExchangeSnapshot::from_states(k, &self.states);
        let predictions = self.schedule.run(self.filters.len(), |i| self.filters[i].predict(&snapshot));
        let predictions = predictions.into_iter().collect::<Result<Vec<_>>>()?;
        let snapshot = snapshot.with_predictions(predictions, y.clone());
        let updated = self.schedule.run(self.filters.len(), |i| -> Result<EstimatorState<T>> {
            let f = &self.filters[i];
            let (gain, covariance) = f.gain_covariance(&self.states[i].covariance, k)?;
            let estimate = f.update(&snapshot.predictions[i], &snapshot, &gain)?;
            Ok(EstimatorState { index: i, k, estimate, covariance, gain })
        });
        self.states = updated.into_iter().collect::<Result<Vec<_>>>()?;
        self.k = k;
        let prior = stack(&snapshot.posteriors);
        let prediction = stack(&snapshot.predictions);
        Ok(StepRecord {
            k,
            prediction: prediction.clone(),
            estimate: self.estimate(),
            covariances: self.covariances(),
            gains: self.states.iter().map(|s| s.gain.clone()).collect(),
            a_prev: Some(self.a.clone()),
            a_point: Some(prior),
            c: self.c.clone(),
            c_point: prediction,
            floor_events: 0,
        })
    }
}

/// Runs the filter over `y_0..y_K`.
pub fn run_dkf<T: Scalar>(
    model: &LinearModel<T>,
    prior: &Prior<T>,
    measurements: &[DVector<T>],
    schedule: Schedule,
) -> Result<EstimationRecord<T>> {
    let y0 = measurements.first().ok_or_else(|| Error::MissingRecord("measurement y_0".into()))?;
    let (dkf, first) = DistributedKalmanFilter::initialize(model, prior, y0)?;
    let mut dkf = dkf.with_schedule(schedule);
    let mut steps = Vec::with_capacity(measurements.len());
    steps.push(first);
    for y in &measurements[1..] {
        steps.push(dkf.step(y)?);
    }
    Ok(EstimationRecord {
        partition: model.partition().clone(),
        q_blocks: model.subsystems().iter().map(|s| s.q.clone()).collect(),
        r: model.r().clone(),
        steps,
    })
}
