//! Full-information estimation oracles and a classical Kalman filter.
//!
//! Both FIE variants minimize
//!
//! ```text
//! ½‖x_0 − x̄_0‖²_{P⁻¹} + ½ Σ_j ‖w_j‖²_{Q⁻¹} + ½ Σ_j ‖v_j‖²_{R⁻¹}
//! ```
//!
//! subject to linear equality constraints, by assembling the KKT system
//! `[[H, Eᵀ], [E, 0]] [z; μ] = [g; e]` and solving it densely with a
//! full-pivoting LU factorization.

use nalgebra::{DMatrix, DVector};

use crate::dkf::Prior;
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, stack, symmetrize};
use crate::model::{dynamics_jacobian, output_jacobian, JacobianMode, LinearModel, NonlinearModel};
use crate::Scalar;

/// Minimizer of one FIE problem over the horizon `0..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieSolution<T: Scalar> {
    /// `x̂_{j|k}`, `j = 0..=k`.
    pub states: Vec<DVector<T>>,
    /// `ŵ_{j|k}`, `j = 0..k`.
    pub process_noise: Vec<DVector<T>>,
    /// `v̂_{j|k}`, `j = 0..=k`.
    pub measurement_noise: Vec<DVector<T>>,
    /// Constraint multipliers in row order: `y_0`, then dynamics `j` and output `j + 1` for each `j`.
    pub multipliers: DVector<T>,
    /// `‖K s − b‖` of the solved KKT system.
    pub kkt_residual: f64,
    /// `‖b‖` of the KKT right-hand side.
    pub rhs_norm: f64,
    pub objective: T,
}

impl<T: Scalar> FieSolution<T> {
    /// `x̂_{k|k}`.
    pub fn terminal(&self) -> &DVector<T> {
        self.states.last().expect("horizon holds at least x_0")
    }

    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

struct Layout {
    k: usize,
    d: usize,
    m: usize,
}

impl Layout {
    fn x(&self, j: usize) -> usize {
        j * self.d
    }
    fn w(&self, j: usize) -> usize {
        (self.k + 1) * self.d + j * self.d
    }
    fn v(&self, j: usize) -> usize {
        (2 * self.k + 1) * self.d + j * self.m
    }
    fn len(&self) -> usize {
        (2 * self.k + 1) * self.d + (self.k + 1) * self.m
    }
}

struct Kkt<T: Scalar> {
    layout: Layout,
    h: DMatrix<T>,
    g: DVector<T>,
    rows: Vec<(Vec<(usize, DMatrix<T>)>, DVector<T>)>,
    prior_mean: DVector<T>,
    p_inv: DMatrix<T>,
    q_inv: DMatrix<T>,
    r_inv: DMatrix<T>,
}

impl<T: Scalar> Kkt<T> {
    fn new(layout: Layout, prior_mean: &DVector<T>, p: &DMatrix<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<Self> {
        let inv = |m: &DMatrix<T>| spd_inverse(m).ok_or(Error::SingularKkt);
        let (p_inv, q_inv, r_inv) = (inv(p)?, inv(q)?, inv(r)?);
        let n = layout.len();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        let (d, m) = (layout.d, layout.m);
        h.view_mut((0, 0), (d, d)).copy_from(&p_inv);
        g.rows_mut(0, d).copy_from(&(&p_inv * prior_mean));
        for j in 0..layout.k {
            let o = layout.w(j);
            h.view_mut((o, o), (d, d)).copy_from(&q_inv);
        }
        for j in 0..=layout.k {
            let o = layout.v(j);
            h.view_mut((o, o), (m, m)).copy_from(&r_inv);
        }
        Ok(Self { layout, h, g, rows: Vec::new(), prior_mean: prior_mean.clone(), p_inv, q_inv, r_inv })
    }

    fn constrain(&mut self, terms: Vec<(usize, DMatrix<T>)>, rhs: DVector<T>) {
        self.rows.push((terms, rhs));
    }

    fn solve(self) -> Result<FieSolution<T>> {
        let n = self.layout.len();
        let nc: usize = self.rows.iter().map(|(_, r)| r.len()).sum();
        let mut kkt = DMatrix::zeros(n + nc, n + nc);
        let mut rhs = DVector::zeros(n + nc);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
        rhs.rows_mut(0, n).copy_from(&self.g);
        let mut row = n;
        for (terms, e) in &self.rows {
            for (col, coef) in terms {
                let mut blk = kkt.view_mut((row, *col), coef.shape());
                blk += coef;
                let mut blk_t = kkt.view_mut((*col, row), (coef.ncols(), coef.nrows()));
                blk_t += coef.transpose();
            }
            rhs.rows_mut(row, e.len()).copy_from(e);
            row += e.len();
        }
        let sol = kkt.clone().full_piv_lu().solve(&rhs).ok_or(Error::SingularKkt)?;
        if sol.iter().any(|v| !v.as_f64().is_finite()) {
            return Err(Error::SingularKkt);
        }
        let kkt_residual = (&kkt * &sol - &rhs).norm().as_f64();
        let l = &self.layout;
        let states: Vec<_> = (0..=l.k).map(|j| sol.rows(l.x(j), l.d).into_owned()).collect();
        let process_noise: Vec<_> = (0..l.k).map(|j| sol.rows(l.w(j), l.d).into_owned()).collect();
        let measurement_noise: Vec<_> = (0..=l.k).map(|j| sol.rows(l.v(j), l.m).into_owned()).collect();
        let objective = weighted_objective(&self.p_inv, &self.q_inv, &self.r_inv, &(&states[0] - &self.prior_mean), &process_noise, &measurement_noise);
        Ok(FieSolution {
            states,
            process_noise,
            measurement_noise,
            multipliers: sol.rows(n, nc).into_owned(),
            kkt_residual,
            rhs_norm: rhs.norm().as_f64(),
            objective,
        })
    }
}

fn quad<T: Scalar>(w: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(w * x))
}

fn weighted_objective<T: Scalar>(
    p_inv: &DMatrix<T>,
    q_inv: &DMatrix<T>,
    r_inv: &DMatrix<T>,
    dx0: &DVector<T>,
    ws: &[DVector<T>],
    vs: &[DVector<T>],
) -> T {
    let mut total = quad(p_inv, dx0);
    for w in ws {
        total += quad(q_inv, w);
    }
    for v in vs {
        total += quad(r_inv, v);
    }
    total * T::of(0.5)
}

fn identity<T: Scalar>(n: usize) -> DMatrix<T> {
    DMatrix::identity(n, n)
}

/// Centralized FIE over `y_0..y_k` with global prior `x̄_0`, `P_0`.
pub fn centralized_fie<T: Scalar>(
    model: &LinearModel<T>,
    prior_mean: &DVector<T>,
    prior_cov: &DMatrix<T>,
    measurements: &[DVector<T>],
) -> Result<FieSolution<T>> {
    let p = model.partition();
    p.check_state(prior_mean, "prior mean")?;
    let k = measurements.len().checked_sub(1).ok_or_else(|| Error::MissingRecord("measurement y_0".into()))?;
    let (d, m) = (p.state_dim(), p.output_dim());
    let layout = Layout { k, d, m };
    let mut kkt = Kkt::new(layout, prior_mean, prior_cov, model.q(), model.r())?;
    let (xo, vo) = (kkt.layout.x(0), kkt.layout.v(0));
    kkt.constrain(vec![(xo, model.c().clone()), (vo, identity(m))], measurements[0].clone());
    for j in 0..k {
        let (xj, xn, wj, vn) = (kkt.layout.x(j), kkt.layout.x(j + 1), kkt.layout.w(j), kkt.layout.v(j + 1));
        kkt.constrain(vec![(xj, model.a().clone()), (wj, identity(d)), (xn, -identity::<T>(d))], DVector::zeros(d));
        kkt.constrain(vec![(xn, model.c().clone()), (vn, identity(m))], measurements[j + 1].clone());
    }
    kkt.solve()
}

/// Neighbor estimates a local FIE consumes at each lag `j = 0..k-1`, as stacked global vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborHistory<T: Scalar> {
    /// Neighbor states entering the dynamics constraint of step `j`.
    pub dynamics: Vec<DVector<T>>,
    /// `x̂ᵐ_{j|j}` entering the output constraint of step `j + 1`.
    pub outputs: Vec<DVector<T>>,
}

impl<T: Scalar> NeighborHistory<T> {
    /// Filtered history: `x̂ˡ_{j|j}` in both constraint families.
    pub fn filtered(estimates: &[DVector<T>]) -> Self {
        Self { dynamics: estimates.to_vec(), outputs: estimates.to_vec() }
    }

    pub fn new(dynamics: Vec<DVector<T>>, outputs: Vec<DVector<T>>) -> Self {
        Self { dynamics, outputs }
    }

    fn check(&self, k: usize, dim: usize) -> Result<()> {
        for (j, (a, b)) in self.dynamics.iter().zip(&self.outputs).enumerate().take(k) {
            if a.len() != dim || b.len() != dim {
                return Err(Error::MissingLag { lag: j });
            }
        }
        let have = self.dynamics.len().min(self.outputs.len());
        if have < k {
            return Err(Error::MissingLag { lag: have });
        }
        Ok(())
    }
}

/// Local FIE of subsystem `index` over `y_0..y_k`.
#[derive(Debug, Clone, Copy)]
pub struct LocalFieProblem<'a, T: Scalar> {
    pub model: &'a LinearModel<T>,
    pub index: usize,
    pub prior: &'a Prior<T>,
    pub measurements: &'a [DVector<T>],
    pub history: &'a NeighborHistory<T>,
}

impl<T: Scalar> LocalFieProblem<'_, T> {
    pub fn horizon(&self) -> usize {
        self.measurements.len().saturating_sub(1)
    }

    fn others(&self) -> Vec<usize> {
        (0..self.model.partition().n_subsystems()).filter(|&l| l != self.index).collect()
    }

    /// Objective at a feasible point generated from `x_0` and `w_0..w_{k-1}`.
    pub fn objective_at(&self, x0: &DVector<T>, ws: &[DVector<T>]) -> Result<T> {
        let (_, vs) = self.propagate(x0, ws)?;
        let i = self.index;
        let inv = |m: &DMatrix<T>| spd_inverse(m).ok_or(Error::SingularKkt);
        let mean = self.model.partition().local(&self.prior.mean, i);
        Ok(weighted_objective(
            &inv(&self.prior.covariances[i])?,
            &inv(self.model.q_block(i))?,
            &inv(self.model.r())?,
            &(x0 - mean),
            ws,
            &vs,
        ))
    }

    /// States and implied measurement residuals of the feasible point `(x_0, w)`.
    pub fn propagate(&self, x0: &DVector<T>, ws: &[DVector<T>]) -> Result<(Vec<DVector<T>>, Vec<DVector<T>>)> {
        let k = self.horizon();
        if ws.len() != k {
            return Err(Error::Dimension(format!("{} process noises for horizon {k}", ws.len())));
        }
        let m = self.model;
        let i = self.index;
        let c_i = m.c_cols(i);
        let cross = self.cross_output_matrix();
        let mut states = vec![x0.clone()];
        let mut vs = vec![self.y0_rhs() - &c_i * x0];
        for j in 0..k {
            let next = m.a_block(i, i) * &states[j] + &ws[j] - self.dynamics_rhs(j);
            let out = self.output_rhs(j) - &c_i * &next - &cross * &states[j];
            states.push(next);
            vs.push(out);
        }
        Ok((states, vs))
    }

    fn cross_output_matrix(&self) -> DMatrix<T> {
        let m = self.model;
        let mut out = DMatrix::zeros(m.partition().output_dim(), m.partition().dim(self.index));
        for l in self.others() {
            out += m.c_cols(l) * m.a_block(l, self.index);
        }
        out
    }

    fn y0_rhs(&self) -> DVector<T> {
        let m = self.model;
        let p = m.partition();
        let mut rhs = self.measurements[0].clone();
        for l in self.others() {
            rhs -= m.c_cols(l) * p.local(&self.prior.mean, l);
        }
        rhs
    }

    /// `−Σ_{l≠i} A_il x̂ˡ` at lag `j`.
    fn dynamics_rhs(&self, j: usize) -> DVector<T> {
        let m = self.model;
        let p = m.partition();
        let mut rhs = DVector::zeros(p.dim(self.index));
        for l in self.others() {
            rhs -= m.a_block(self.index, l) * p.local(&self.history.dynamics[j], l);
        }
        rhs
    }

    /// `y_{j+1} − Σ_{l≠i} Σ_{m≠i} C_[:,l] A_lm x̂ᵐ_{j|j}`.
    fn output_rhs(&self, j: usize) -> DVector<T> {
        let md = self.model;
        let p = md.partition();
        let mut rhs = self.measurements[j + 1].clone();
        let others = self.others();
        for &l in &others {
            let c_l = md.c_cols(l);
            for &m in &others {
                rhs -= &c_l * (md.a_block(l, m) * p.local(&self.history.outputs[j], m));
            }
        }
        rhs
    }

    pub fn solve(&self) -> Result<FieSolution<T>> {
        let md = self.model;
        let p = md.partition();
        let i = self.index;
        if i >= p.n_subsystems() {
            return Err(Error::SubsystemIndex(i));
        }
        self.prior.validate(p)?;
        let k = self.horizon();
        if self.measurements.is_empty() {
            return Err(Error::MissingRecord("measurement y_0".into()));
        }
        self.history.check(k, p.state_dim())?;
        let (d, ny) = (p.dim(i), p.output_dim());
        let layout = Layout { k, d, m: ny };
        let mean = p.local(&self.prior.mean, i);
        let mut kkt = Kkt::new(layout, &mean, &self.prior.covariances[i], md.q_block(i), md.r())?;
        let c_i = md.c_cols(i);
        let a_ii = md.a_block(i, i);
        let cross = self.cross_output_matrix();
        let (xo, vo) = (kkt.layout.x(0), kkt.layout.v(0));
        kkt.constrain(vec![(xo, c_i.clone()), (vo, identity(ny))], self.y0_rhs());
        for j in 0..k {
            let (xj, xn, wj, vn) = (kkt.layout.x(j), kkt.layout.x(j + 1), kkt.layout.w(j), kkt.layout.v(j + 1));
            kkt.constrain(vec![(xj, a_ii.clone()), (wj, identity(d)), (xn, -identity::<T>(d))], self.dynamics_rhs(j));
            kkt.constrain(vec![(xn, c_i.clone()), (xj, cross.clone()), (vn, identity(ny))], self.output_rhs(j));
        }
        kkt.solve()
    }
}

/// Solves the local FIE of one subsystem.
pub fn local_fie<T: Scalar>(problem: &LocalFieProblem<'_, T>) -> Result<FieSolution<T>> {
    problem.solve()
}

/// Local FIEs for horizons `1..=K` in which the dynamics constraints consume the
/// neighbors' own FIE trajectories from the previous horizon (`x̂ˡ_{j|k-1}`) and
/// the output constraints the terminal estimates `x̂ᵐ_{j|j}` of the chain.
///
/// `initial` is `x̂_{0|0}`. Returns `chain[k-1][i]`.
pub fn smoothed_neighbor_chain<T: Scalar>(
    model: &LinearModel<T>,
    prior: &Prior<T>,
    measurements: &[DVector<T>],
    initial: &DVector<T>,
) -> Result<Vec<Vec<FieSolution<T>>>> {
    let p = model.partition();
    let n = p.n_subsystems();
    let horizon = measurements.len().saturating_sub(1);
    let mut filtered = vec![initial.clone()];
    let mut chain: Vec<Vec<FieSolution<T>>> = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let dynamics: Vec<DVector<T>> = match chain.last() {
            None => vec![initial.clone()],
            Some(prev) => (0..k).map(|j| stack(&prev.iter().map(|s| s.states[j].clone()).collect::<Vec<_>>())).collect(),
        };
        let history = NeighborHistory::new(dynamics, filtered.clone());
        let solutions = (0..n)
            .map(|i| LocalFieProblem { model, index: i, prior, measurements: &measurements[..=k], history: &history }.solve())
            .collect::<Result<Vec<_>>>()?;
        filtered.push(stack(&solutions.iter().map(|s| s.terminal().clone()).collect::<Vec<_>>()));
        chain.push(solutions);
    }
    Ok(chain)
}

/// Posterior of a classical Kalman filter at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanStep<T: Scalar> {
    pub estimate: DVector<T>,
    pub covariance: DMatrix<T>,
    pub gain: DMatrix<T>,
}

fn measurement_update<T: Scalar>(x: &DVector<T>, p: &DMatrix<T>, c: &DMatrix<T>, r: &DMatrix<T>, innovation: &DVector<T>) -> Result<KalmanStep<T>> {
    let s = symmetrize(&(c * p * c.transpose() + r));
    let s_inv = spd_inverse(&s).ok_or(Error::InnovationNotSpd { index: 0, k: 0 })?;
    let gain = p * c.transpose() * s_inv;
    let n = p.nrows();
    let covariance = symmetrize(&((identity::<T>(n) - &gain * c) * p));
    Ok(KalmanStep { estimate: x + &gain * innovation, covariance, gain })
}

/// Measurement update of the prior `(x̄, P)` with `y_0`.
pub fn centralized_kf_init<T: Scalar>(model: &LinearModel<T>, mean: &DVector<T>, cov: &DMatrix<T>, y0: &DVector<T>) -> Result<KalmanStep<T>> {
    measurement_update(mean, cov, model.c(), model.r(), &(y0 - model.c() * mean))
}

/// One predict/update step of the classical Kalman filter.
pub fn centralized_kf_step<T: Scalar>(model: &LinearModel<T>, x: &DVector<T>, p: &DMatrix<T>, y: &DVector<T>) -> Result<KalmanStep<T>> {
    let a = model.a();
    let pred = a * x;
    let p_pred = a * p * a.transpose() + model.q();
    let innovation = y - model.c() * &pred;
    measurement_update(&pred, &p_pred, model.c(), model.r(), &innovation)
}

/// Measurement update of a global EKF prior, linearizing `h` at the prior mean.
pub fn global_ekf_init<T: Scalar>(model: &NonlinearModel<T>, mean: &DVector<T>, cov: &DMatrix<T>, y0: &DVector<T>, mode: JacobianMode) -> Result<KalmanStep<T>> {
    let c = output_jacobian(model, mean, mode)?;
    measurement_update(mean, cov, &c, model.r(), &(y0 - model.h(mean)?))
}

/// One step of the classical global EKF.
pub fn global_ekf_step<T: Scalar>(
    model: &NonlinearModel<T>,
    x: &DVector<T>,
    p: &DMatrix<T>,
    y: &DVector<T>,
    mode: JacobianMode,
) -> Result<KalmanStep<T>> {
    let a = dynamics_jacobian(model, x, mode)?;
    let pred = model.f(x)?;
    let p_pred = &a * p * a.transpose() + model.q();
    let c = output_jacobian(model, &pred, mode)?;
    let innovation = y - model.h(&pred)?;
    measurement_update(&pred, &p_pred, &c, model.r(), &innovation)
}
