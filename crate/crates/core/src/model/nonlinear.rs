use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linearize::{jacobian_rel_error, transition_blocks_fd};
use super::{LinearModel, StatePartition};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, block_diag, is_spd, stack};
use crate::Scalar;

/// Local maps of one nonlinear subsystem.
///
/// `neighbors` passed to the transition are ordered as the owning
/// [`NonlinearSubsystem::neighbors`] list.
pub trait SubsystemDynamics<T: Scalar>: Send + Sync {
    fn transition(&self, own: &DVector<T>, neighbors: &[DVector<T>]) -> DVector<T>;

    fn output(&self, own: &DVector<T>) -> DVector<T>;

    /// Analytic blocks `[∂f/∂own, ∂f/∂neighbor_0, ...]`.
    fn transition_jacobian(&self, _own: &DVector<T>, _neighbors: &[DVector<T>]) -> Option<Vec<DMatrix<T>>> {
        None
    }

    /// Analytic `∂h/∂own`.
    fn output_jacobian(&self, _own: &DVector<T>) -> Option<DMatrix<T>> {
        None
    }
}

/// Affine subsystem maps; wraps a linear subsystem for the nonlinear code path.
#[derive(Debug, Clone)]
pub struct AffineDynamics<T: Scalar> {
    pub a_ii: DMatrix<T>,
    pub a_il: Vec<DMatrix<T>>,
    pub c_ii: DMatrix<T>,
}

impl<T: Scalar> SubsystemDynamics<T> for AffineDynamics<T> {
    fn transition(&self, own: &DVector<T>, neighbors: &[DVector<T>]) -> DVector<T> {
        let mut out = &self.a_ii * own;
        for (a, x) in self.a_il.iter().zip(neighbors) {
            out += a * x;
        }
        out
    }

    fn output(&self, own: &DVector<T>) -> DVector<T> {
        &self.c_ii * own
    }

    fn transition_jacobian(&self, _own: &DVector<T>, _neighbors: &[DVector<T>]) -> Option<Vec<DMatrix<T>>> {
        Some(std::iter::once(self.a_ii.clone()).chain(self.a_il.iter().cloned()).collect())
    }

    fn output_jacobian(&self, _own: &DVector<T>) -> Option<DMatrix<T>> {
        Some(self.c_ii.clone())
    }
}

/// Axis-aligned box on which the model maps are required to be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox<T: Scalar> {
    pub lower: DVector<T>,
    pub upper: DVector<T>,
}

impl<T: Scalar> StateBox<T> {
    pub fn new(lower: DVector<T>, upper: DVector<T>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(upper.iter()).any(|(l, u)| l >= u) {
            return Err(Error::Dimension("state box bounds must have equal length with lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// First coordinate outside the box, if any.
    pub fn violation(&self, x: &DVector<T>) -> Option<usize> {
        (0..x.len()).find(|&j| !(x[j] >= self.lower[j] && x[j] <= self.upper[j]))
    }

    /// Uniform sample inside the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<T> {
        DVector::from_fn(self.lower.len(), |j, _| {
            let u: f64 = rng.random();
            self.lower[j] + (self.upper[j] - self.lower[j]) * T::of(u)
        })
    }
}

/// One nonlinear subsystem `x⁺ = f_i(x, X) + w`, `y = h_i(x) + v`.
#[derive(Clone)]
pub struct NonlinearSubsystem<T: Scalar> {
    pub index: usize,
    pub neighbors: Vec<usize>,
    pub dynamics: Arc<dyn SubsystemDynamics<T>>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Scalar> fmt::Debug for NonlinearSubsystem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearSubsystem")
            .field("index", &self.index)
            .field("neighbors", &self.neighbors)
            .field("q", &self.q)
            .field("r", &self.r)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> NonlinearSubsystem<T> {
    pub fn new(
        index: usize,
        neighbors: Vec<usize>,
        dynamics: Arc<dyn SubsystemDynamics<T>>,
        q: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        if !is_spd(&q) || q.nrows() == 0 {
            return Err(Error::NotSpd { index, what: "Q_i" });
        }
        if !is_spd(&r) {
            return Err(Error::NotSpd { index, what: "R_i" });
        }
        Ok(Self { index, neighbors, dynamics, q, r })
    }
}

/// Number of box samples used by the constructor-time Jacobian spot check.
pub const SPOT_CHECK_POINTS: usize = 8;

/// Global nonlinear model assembled from subsystems.
#[derive(Debug, Clone)]
pub struct NonlinearModel<T: Scalar> {
    partition: StatePartition,
    subsystems: Vec<NonlinearSubsystem<T>>,
    q: DMatrix<T>,
    r: DMatrix<T>,
    state_box: Option<StateBox<T>>,
    dependents: Vec<Vec<usize>>,
}

impl<T: Scalar> NonlinearModel<T> {
    /// Validates the subsystem set and, when a state box is given, spot-checks
    /// every analytic Jacobian against central differences inside it.
    pub fn new(partition: StatePartition, mut subs: Vec<NonlinearSubsystem<T>>, state_box: Option<StateBox<T>>) -> Result<Self> {
        let n = partition.n_subsystems();
        let mut seen = vec![false; n];
        for s in &subs {
            if s.index >= n || seen[s.index] {
                return Err(Error::SubsystemIndex(s.index));
            }
            seen[s.index] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("subsystem {i} is missing")));
        }
        subs.sort_by_key(|s| s.index);
        let mut dependents = vec![Vec::new(); n];
        for s in &subs {
            let i = s.index;
            if s.q.nrows() != partition.dim(i) || s.r.nrows() != partition.out_dim(i) {
                return Err(Error::Dimension(format!("noise weights of subsystem {i} do not match the partition")));
            }
            for &l in &s.neighbors {
                if l >= n || l == i || dependents[l].contains(&i) {
                    return Err(Error::SubsystemIndex(l));
                }
                dependents[l].push(i);
            }
        }
        if let Some(b) = &state_box {
            partition.check_state(&b.lower, "state box")?;
        }
        let q = block_diag(&subs.iter().map(|s| s.q.clone()).collect::<Vec<_>>());
        let r = block_diag(&subs.iter().map(|s| s.r.clone()).collect::<Vec<_>>());
        let model = Self { partition, subsystems: subs, q, r, state_box, dependents };
        if let Some(b) = &model.state_box {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for _ in 0..SPOT_CHECK_POINTS {
                let x = b.sample(&mut rng);
                model.f(&x)?;
                model.h(&x)?;
                model.spot_check(&x)?;
            }
        }
        Ok(model)
    }

    fn spot_check(&self, x: &DVector<T>) -> Result<()> {
        let tol = T::JACOBIAN_REL_TOL;
        for i in 0..self.n_subsystems() {
            let own = self.partition.local(x, i);
            let nbs = self.neighbor_states(i, x);
            let dynamics = &self.subsystems[i].dynamics;
            if let Some(analytic) = dynamics.transition_jacobian(&own, &nbs) {
                let fd = transition_blocks_fd(self, i, x)?;
                if analytic.len() != fd.len() || analytic.iter().zip(&fd).any(|(a, b)| a.shape() != b.shape()) {
                    return Err(Error::Dimension(format!("analytic transition Jacobian of subsystem {i} has the wrong block shapes")));
                }
                let err = analytic.iter().zip(&fd).map(|(a, b)| jacobian_rel_error(a, b)).fold(0.0, f64::max);
                if !(err <= tol) {
                    return Err(Error::JacobianMismatch { index: i, rel_err: err });
                }
            }
            if let Some(analytic) = dynamics.output_jacobian(&own) {
                let fd = super::linearize::output_block_fd(self, i, x)?;
                let err = if analytic.shape() == fd.shape() { jacobian_rel_error(&analytic, &fd) } else { f64::INFINITY };
                if !(err <= tol) {
                    return Err(Error::JacobianMismatch { index: i, rel_err: err });
                }
            }
        }
        Ok(())
    }

    /// Wraps a linear model so that it runs through the nonlinear code path.
    pub fn from_linear(model: &LinearModel<T>) -> Result<Self> {
        let subs = model
            .subsystems()
            .iter()
            .map(|s| {
                let neighbors: Vec<usize> = s.couplings.keys().copied().collect();
                let dynamics = AffineDynamics {
                    a_ii: s.a_ii.clone(),
                    a_il: s.couplings.values().cloned().collect(),
                    c_ii: s.c_ii.clone(),
                };
                NonlinearSubsystem::new(s.index, neighbors, Arc::new(dynamics), s.q.clone(), s.r.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model.partition().clone(), subs, None)
    }

    /// The same system treated as a single subsystem with the global maps.
    pub fn centralized(&self) -> Result<Self> {
        let p = &self.partition;
        let single = StatePartition::new(vec![p.state_dim()], vec![p.output_dim()])?;
        let dynamics = Centralized { inner: self.clone() };
        let sub = NonlinearSubsystem::new(0, Vec::new(), Arc::new(dynamics), self.q.clone(), self.r.clone())?;
        Self::new(single, vec![sub], self.state_box.clone())
    }

    /// Copy with different estimator weights `Q_i`, `R_i`.
    pub fn with_weights(&self, q_blocks: Vec<DMatrix<T>>, r_blocks: Vec<DMatrix<T>>) -> Result<Self> {
        if q_blocks.len() != self.n_subsystems() || r_blocks.len() != self.n_subsystems() {
            return Err(Error::Dimension("one Q_i and one R_i per subsystem required".into()));
        }
        let subs = self
            .subsystems
            .iter()
            .zip(q_blocks.into_iter().zip(r_blocks))
            .map(|(s, (q, r))| NonlinearSubsystem::new(s.index, s.neighbors.clone(), s.dynamics.clone(), q, r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.partition.clone(), subs, self.state_box.clone())
    }

    pub fn partition(&self) -> &StatePartition {
        &self.partition
    }

    pub fn n_subsystems(&self) -> usize {
        self.subsystems.len()
    }

    pub fn subsystem(&self, i: usize) -> &NonlinearSubsystem<T> {
        &self.subsystems[i]
    }

    pub fn subsystems(&self) -> &[NonlinearSubsystem<T>] {
        &self.subsystems
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    pub fn q_block(&self, i: usize) -> &DMatrix<T> {
        &self.subsystems[i].q
    }

    pub fn state_box(&self) -> Option<&StateBox<T>> {
        self.state_box.as_ref()
    }

    /// Subsystems whose transition reads the state of `i`.
    pub fn dependents(&self, i: usize) -> &[usize] {
        &self.dependents[i]
    }

    /// Whether every subsystem supplies analytic Jacobians.
    pub fn has_analytic_jacobians(&self) -> bool {
        let x = match &self.state_box {
            Some(b) => (&b.lower + &b.upper) * T::of(0.5),
            None => DVector::zeros(self.partition.state_dim()),
        };
        (0..self.n_subsystems()).all(|i| {
            let own = self.partition.local(&x, i);
            let d = &self.subsystems[i].dynamics;
            d.transition_jacobian(&own, &self.neighbor_states(i, &x)).is_some() && d.output_jacobian(&own).is_some()
        })
    }

    /// Neighbor states of subsystem `i` gathered from a global state, in declaration order.
    pub fn neighbor_states(&self, i: usize, x: &DVector<T>) -> Vec<DVector<T>> {
        self.subsystems[i].neighbors.iter().map(|&l| self.partition.local(x, l)).collect()
    }

    /// `f_i` evaluated on local parts of a global state.
    pub fn f_local(&self, i: usize, x: &DVector<T>) -> Result<DVector<T>> {
        let own = self.partition.local(x, i);
        let out = self.subsystems[i].dynamics.transition(&own, &self.neighbor_states(i, x));
        if out.len() != self.partition.dim(i) {
            return Err(Error::Dimension(format!("f_{i} returned {} values, expected {}", out.len(), self.partition.dim(i))));
        }
        if !all_finite(out.iter().copied()) {
            return Err(Error::NonFinite { index: i, what: "f" });
        }
        Ok(out)
    }

    pub fn h_local(&self, i: usize, x: &DVector<T>) -> Result<DVector<T>> {
        let out = self.subsystems[i].dynamics.output(&self.partition.local(x, i));
        if out.len() != self.partition.out_dim(i) {
            return Err(Error::Dimension(format!("h_{i} returned {} values, expected {}", out.len(), self.partition.out_dim(i))));
        }
        if !all_finite(out.iter().copied()) {
            return Err(Error::NonFinite { index: i, what: "h" });
        }
        Ok(out)
    }

    pub fn f(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.partition.check_state(x, "state")?;
        let parts = (0..self.n_subsystems()).map(|i| self.f_local(i, x)).collect::<Result<Vec<_>>>()?;
        Ok(stack(&parts))
    }

    pub fn h(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.partition.check_state(x, "state")?;
        let parts = (0..self.n_subsystems()).map(|i| self.h_local(i, x)).collect::<Result<Vec<_>>>()?;
        Ok(stack(&parts))
    }
}

/// Global maps of a model exposed as one subsystem.
struct Centralized<T: Scalar> {
    inner: NonlinearModel<T>,
}

impl<T: Scalar> SubsystemDynamics<T> for Centralized<T> {
    fn transition(&self, own: &DVector<T>, _neighbors: &[DVector<T>]) -> DVector<T> {
        self.inner.f(own).unwrap_or_else(|_| DVector::from_element(own.len(), T::of(f64::NAN)))
    }

    fn output(&self, own: &DVector<T>) -> DVector<T> {
        self.inner
            .h(own)
            .unwrap_or_else(|_| DVector::from_element(self.inner.partition.output_dim(), T::of(f64::NAN)))
    }

    fn transition_jacobian(&self, own: &DVector<T>, _neighbors: &[DVector<T>]) -> Option<Vec<DMatrix<T>>> {
        super::linearize::dynamics_jacobian(&self.inner, own, super::JacobianMode::Analytic).ok().map(|j| vec![j])
    }

    fn output_jacobian(&self, own: &DVector<T>) -> Option<DMatrix<T>> {
        super::linearize::output_jacobian(&self.inner, own, super::JacobianMode::Analytic).ok()
    }
}
