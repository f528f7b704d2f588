//! Built-in benchmark systems.
//!
//! * The 4-state, two-subsystem linear system with its printed initial state
//!   and initial guess.
//! * A decoupled variant with the cross blocks removed.
//! * A chain of four 2-state reactors (temperature, concentration) with
//!   Arrhenius kinetics, saturating `tanh` cross-coupling from the upstream
//!   reactor and a saturating concentration sensor.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::diag_from;
use crate::model::{LinearModel, NonlinearModel, NonlinearSubsystem, StateBox, StatePartition, SubsystemDynamics};
use crate::Scalar;

pub const PAPER_A: [[f64; 4]; 4] = [
    [0.68, 0.25, 0.17, 0.11],
    [-0.09, 0.98, 0.0, -0.13],
    [0.15, 0.0, 0.9, -0.6],
    [0.12, -0.01, 0.1, 0.89],
];
pub const PAPER_C: [[f64; 4]; 2] = [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
pub const PAPER_X0: [f64; 4] = [-7.0047, 9.0089, 6.0012, -3.0066];
pub const PAPER_GUESS: [f64; 4] = [-7.7052, 9.9089, 6.6013, -3.3073];
pub const PAPER_PRIOR_VARIANCE: f64 = 100.0;

pub fn matrix<T: Scalar, const R: usize, const C: usize>(rows: &[[f64; C]; R]) -> DMatrix<T> {
    DMatrix::from_fn(R, C, |i, j| T::of(rows[i][j]))
}

pub fn vector<T: Scalar>(values: &[f64]) -> DVector<T> {
    DVector::from_iterator(values.len(), values.iter().map(|&v| T::of(v)))
}

fn scaled_identity<T: Scalar>(n: usize, s: f64) -> DMatrix<T> {
    DMatrix::identity(n, n) * T::of(s)
}

/// The 4-state linear system split into two 2-state subsystems with one output each.
pub fn paper_linear<T: Scalar>(q: f64, r: f64) -> Result<LinearModel<T>> {
    let p = StatePartition::new(vec![2, 2], vec![1, 1])?;
    LinearModel::from_dense(
        p,
        &matrix(&PAPER_A),
        &matrix(&PAPER_C),
        vec![scaled_identity(2, q), scaled_identity(2, q)],
        vec![scaled_identity(1, r), scaled_identity(1, r)],
    )
}

/// [`paper_linear`] with its cross blocks `A_12`, `A_21` zeroed.
pub fn decoupled_linear<T: Scalar>(q: f64, r: f64) -> Result<LinearModel<T>> {
    let mut a: DMatrix<T> = matrix(&PAPER_A);
    a.view_mut((0, 2), (2, 2)).fill(T::zero());
    a.view_mut((2, 0), (2, 2)).fill(T::zero());
    let p = StatePartition::new(vec![2, 2], vec![1, 1])?;
    LinearModel::from_dense(
        p,
        &a,
        &matrix(&PAPER_C),
        vec![scaled_identity(2, q), scaled_identity(2, q)],
        vec![scaled_identity(1, r), scaled_identity(1, r)],
    )
}

pub const REACTOR_STEADY_STATE: [f64; 8] = [310.84, 3.03, 310.83, 2.80, 312.47, 2.84, 311.16, 3.01];
pub const REACTOR_X0: [f64; 8] = [341.9213, 3.3349, 341.9161, 3.0803, 343.7129, 3.1286, 342.2733, 3.3156];
pub const REACTOR_GUESS: [f64; 8] = [362.7388, 3.5215, 362.8758, 3.2521, 365.0446, 3.3023, 362.5779, 3.5010];
pub const REACTOR_LOWER: [f64; 2] = [250.0, 0.0];
pub const REACTOR_UPPER: [f64; 2] = [450.0, 10.0];

/// Physical parameters of the reactor chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactorParams {
    pub dt: f64,
    pub dilution: f64,
    pub pre_exponential: f64,
    pub activation: f64,
    pub heat_release: f64,
    pub temp_scale: f64,
    pub conc_scale: f64,
    pub sensor_saturation: f64,
    /// Nominal coupling gain, multiplied by the `coupling` argument of [`reactor_chain`].
    pub base_coupling: f64,
    pub steady_state: Vec<f64>,
    /// Upstream reactor of each reactor.
    pub upstream: Vec<Option<usize>>,
}

impl Default for ReactorParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            dilution: 5.0,
            pre_exponential: 1e7,
            activation: 5000.0,
            heat_release: 5.0,
            temp_scale: 10.0,
            conc_scale: 1.0,
            sensor_saturation: 10.0,
            base_coupling: 1.5,
            steady_state: REACTOR_STEADY_STATE.to_vec(),
            upstream: vec![None, Some(0), Some(1), Some(2)],
        }
    }
}

impl ReactorParams {
    fn rate(&self, t: f64) -> f64 {
        self.pre_exponential * (-self.activation / t).exp()
    }
}

/// One reactor; state `[T, C]`, output `[T, C_sat(1 − e^{−C/C_sat})]`.
#[derive(Debug, Clone)]
pub struct Reactor {
    params: ReactorParams,
    coupling: f64,
    has_upstream: bool,
    feed_temp: f64,
    feed_conc: f64,
}

struct Terms {
    rate: f64,
    rate_dt: f64,
    sech2_t: f64,
    sech2_c: f64,
    flux_t: f64,
    flux_c: f64,
}

impl Reactor {
    /// Back-solves the feed so that `steady` is an exact fixed point.
    fn new(params: &ReactorParams, coupling: f64, steady: [f64; 2], upstream: Option<[f64; 2]>) -> Self {
        let mut r = Self { params: params.clone(), coupling, has_upstream: upstream.is_some(), feed_temp: 0.0, feed_conc: 0.0 };
        let [t, c] = steady;
        let terms = r.terms(t, c, upstream.unwrap_or(steady));
        let p = &r.params;
        r.feed_conc = c + (terms.rate * c - terms.flux_c) / p.dilution;
        r.feed_temp = t - (p.heat_release * terms.rate * c + terms.flux_t) / p.dilution;
        r
    }

    fn terms(&self, t: f64, c: f64, up: [f64; 2]) -> Terms {
        let p = &self.params;
        let rate = p.rate(t);
        let rate_dt = rate * p.activation / (t * t);
        if !self.has_upstream {
            return Terms { rate, rate_dt, sech2_t: 0.0, sech2_c: 0.0, flux_t: 0.0, flux_c: 0.0 };
        }
        let ut = ((up[0] - t) / p.temp_scale).tanh();
        let uc = ((up[1] - c) / p.conc_scale).tanh();
        Terms {
            rate,
            rate_dt,
            sech2_t: 1.0 - ut * ut,
            sech2_c: 1.0 - uc * uc,
            flux_t: self.coupling * p.temp_scale * ut,
            flux_c: self.coupling * p.conc_scale * uc,
        }
    }

    fn unpack<T: Scalar>(own: &DVector<T>, neighbors: &[DVector<T>]) -> (f64, f64, Option<[f64; 2]>) {
        let up = neighbors.first().map(|n| [n[0].as_f64(), n[1].as_f64()]);
        (own[0].as_f64(), own[1].as_f64(), up)
    }

    pub fn feed(&self) -> (f64, f64) {
        (self.feed_temp, self.feed_conc)
    }
}

impl<T: Scalar> SubsystemDynamics<T> for Reactor {
    fn transition(&self, own: &DVector<T>, neighbors: &[DVector<T>]) -> DVector<T> {
        let (t, c, up) = Self::unpack(own, neighbors);
        let p = &self.params;
        let m = self.terms(t, c, up.unwrap_or([t, c]));
        let t_next = t + p.dt * (p.dilution * (self.feed_temp - t) + p.heat_release * m.rate * c + m.flux_t);
        let c_next = c + p.dt * (p.dilution * (self.feed_conc - c) - m.rate * c + m.flux_c);
        DVector::from_vec(vec![T::of(t_next), T::of(c_next)])
    }

    fn output(&self, own: &DVector<T>) -> DVector<T> {
        let s = self.params.sensor_saturation;
        let c = own[1].as_f64();
        DVector::from_vec(vec![own[0], T::of(s * (1.0 - (-c / s).exp()))])
    }

    fn transition_jacobian(&self, own: &DVector<T>, neighbors: &[DVector<T>]) -> Option<Vec<DMatrix<T>>> {
        let (t, c, up) = Self::unpack(own, neighbors);
        let p = &self.params;
        let m = self.terms(t, c, up.unwrap_or([t, c]));
        let (kt, kc) = (self.coupling * m.sech2_t, self.coupling * m.sech2_c);
        let own_block = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 + p.dt * (-p.dilution + p.heat_release * m.rate_dt * c - kt),
                p.dt * p.heat_release * m.rate,
                -p.dt * m.rate_dt * c,
                1.0 + p.dt * (-p.dilution - m.rate - kc),
            ],
        )
        .map(T::of);
        let mut blocks = vec![own_block];
        if self.has_upstream {
            blocks.push(DMatrix::from_row_slice(2, 2, &[p.dt * kt, 0.0, 0.0, p.dt * kc]).map(T::of));
        }
        Some(blocks)
    }

    fn output_jacobian(&self, own: &DVector<T>) -> Option<DMatrix<T>> {
        let s = self.params.sensor_saturation;
        let c = own[1].as_f64();
        Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, (-c / s).exp()]).map(T::of))
    }
}

/// Steady-state output `h(x_s)` of the reactor chain.
pub fn reactor_steady_output(params: &ReactorParams) -> Vec<f64> {
    let s = params.sensor_saturation;
    params
        .steady_state
        .chunks(2)
        .flat_map(|x| [x[0], s * (1.0 - (-x[1] / s).exp())])
        .collect()
}

/// Reactor chain with coupling gain `coupling · base_coupling` and diagonal
/// estimator weights given per coordinate.
pub fn reactor_chain<T: Scalar>(params: &ReactorParams, coupling: f64, q_diag: &[f64], r_diag: &[f64]) -> Result<NonlinearModel<T>> {
    let n = params.upstream.len();
    let partition = StatePartition::new(vec![2; n], vec![2; n])?;
    let gain = coupling * params.base_coupling;
    let xs = &params.steady_state;
    let subs = (0..n)
        .map(|i| {
            let steady = [xs[2 * i], xs[2 * i + 1]];
            let up = params.upstream[i].map(|l| [xs[2 * l], xs[2 * l + 1]]);
            let reactor = Reactor::new(params, gain, steady, up);
            let q = diag_from(&q_diag[2 * i..2 * i + 2].iter().map(|&v| T::of(v)).collect::<Vec<_>>());
            let r = diag_from(&r_diag[2 * i..2 * i + 2].iter().map(|&v| T::of(v)).collect::<Vec<_>>());
            NonlinearSubsystem::new(i, params.upstream[i].into_iter().collect(), Arc::new(reactor), q, r)
        })
        .collect::<Result<Vec<_>>>()?;
    let lower = (0..n).flat_map(|_| REACTOR_LOWER).map(T::of).collect::<Vec<_>>();
    let upper = (0..n).flat_map(|_| REACTOR_UPPER).map(T::of).collect::<Vec<_>>();
    let state_box = StateBox::new(DVector::from_vec(lower), DVector::from_vec(upper))?;
    NonlinearModel::new(partition, subs, Some(state_box))
}
