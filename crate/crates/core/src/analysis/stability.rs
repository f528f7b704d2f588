use nalgebra::DMatrix;

use super::recursion::{split_transition, transition_at};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, condition_number, eig_range, spd_inverse, spectral_norm, symmetrize};
use crate::record::EstimationRecord;
use crate::Scalar;

/// Strictness tolerance on the smallest eigenvalue of `½T_k − Λ_k`.
pub const ASSUMPTION4_TOL: f64 = 1e-10;
/// `F_ii` with a larger condition number is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative slack allowed on the non-strict contraction inequality.
pub const PROP2_REL_TOL: f64 = 1e-10;

/// Outcome of a monitor at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonitorStatus {
    Satisfied,
    Violated,
    NotCheckable,
}

impl MonitorStatus {
    pub fn is_satisfied(self) -> bool {
        self == MonitorStatus::Satisfied
    }
}

/// Matrices entering the weak-coupling condition at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T: Scalar> {
    pub k: usize,
    pub f_d: DMatrix<T>,
    pub f_o: DMatrix<T>,
    /// `Π_{k|k} = blockdiag(P_{i,k|k}⁻¹)`.
    pub pi: DMatrix<T>,
    /// `T_k = blockdiag(T_ii,k)`.
    pub t: DMatrix<T>,
    /// `Λ_k = F_oᵀΠF_o + F_oᵀΠF_d + F_dᵀΠF_o`.
    pub lambda: DMatrix<T>,
    /// Smallest eigenvalue of `½T_k − Λ_k`.
    pub margin: f64,
    /// Largest condition number among the `F_ii,k`.
    pub max_condition: f64,
    pub status: MonitorStatus,
}

fn inverse_blocks<T: Scalar>(blocks: &[DMatrix<T>], k: usize) -> Result<Vec<DMatrix<T>>> {
    blocks
        .iter()
        .enumerate()
        .map(|(i, p)| spd_inverse(p).ok_or(Error::CovarianceCollapse { index: i, k }))
        .collect()
}

/// Evaluates `Λ_k < ½T_k` at instant `k ≥ 1`.
pub fn check_assumption4<T: Scalar>(record: &EstimationRecord<T>, k: usize) -> Result<StabilityReport<T>> {
    if k == 0 || k >= record.steps.len() {
        return Err(Error::MissingRecord(format!("instants k-1 and k for k={k}")));
    }
    let p = &record.partition;
    let f = transition_at(record, k)?;
    let (f_d, f_o) = split_transition(&f, p);
    let pi_prev = inverse_blocks(&record.steps[k - 1].covariances, k - 1)?;
    let pi_blocks = inverse_blocks(&record.steps[k].covariances, k)?;
    let pi = block_diag(&pi_blocks);
    let r_inv = spd_inverse(&record.r).ok_or(Error::NotSpd { index: 0, what: "R" })?;

    let mut max_condition = 1.0f64;
    let mut t_blocks = Vec::with_capacity(p.n_subsystems());
    let mut singular = false;
    for i in 0..p.n_subsystems() {
        let (o, d) = (p.offset(i), p.dim(i));
        let f_ii = f.view((o, o), (d, d)).into_owned();
        let cond = condition_number(&f_ii);
        max_condition = max_condition.max(cond);
        let inv = if cond > MAX_CONDITION { None } else { f_ii.try_inverse() };
        let Some(f_inv) = inv else {
            singular = true;
            t_blocks.push(DMatrix::zeros(d, d));
            continue;
        };
        let u = f_inv * &record.steps[k].gains[i];
        let pu = &pi_prev[i] * &u;
        let inner = symmetrize(&(&r_inv + u.transpose() * &pu));
        let inner_inv = spd_inverse(&inner).ok_or(Error::NotSpd { index: i, what: "R⁻¹ + UᵀΠU" })?;
        t_blocks.push(symmetrize(&(&pu * inner_inv * pu.transpose())));
    }
    let t = block_diag(&t_blocks);
    let lambda = f_o.transpose() * &pi * &f_o + f_o.transpose() * &pi * &f_d + f_d.transpose() * &pi * &f_o;
    let diff = &t * T::of(0.5) - &lambda;
    let margin = eig_range(&diff).0.as_f64();
    let status = if singular {
        MonitorStatus::NotCheckable
    } else if margin > ASSUMPTION4_TOL {
        MonitorStatus::Satisfied
    } else {
        MonitorStatus::Violated
    };
    Ok(StabilityReport { k, f_d, f_o, pi, t, lambda: symmetrize(&lambda), margin, max_condition, status })
}

/// Empirical bounds of the boundedness assumption over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTable {
    pub subsystems: usize,
    /// min/max of `‖A_ii,k‖`.
    pub a_diag: (f64, f64),
    /// max of `‖A_ij,k‖`, `i ≠ j`.
    pub a_cross_max: f64,
    /// min/max of `‖C_[:,i],k‖`.
    pub c: (f64, f64),
    /// min/max eigenvalue of `P_{i,k|k}`.
    pub p: (f64, f64),
    pub q: (f64, f64),
    pub r: (f64, f64),
    /// min/max of `‖L_{i,k}‖`, `k ≥ 1`.
    pub l: (f64, f64),
    /// max of `‖F_ii,k‖` observed.
    pub f_observed: f64,
}

impl BoundsTable {
    /// `ā = max(max ‖A_ii‖, max ‖A_ij‖)`.
    pub fn a_upper(&self) -> f64 {
        self.a_diag.1.max(self.a_cross_max)
    }

    /// `f̄ = √n ā + √n l̄ c̄ ā`.
    pub fn f_upper(&self) -> f64 {
        let rn = (self.subsystems as f64).sqrt();
        let a = self.a_upper();
        rn * a + rn * self.l.1 * self.c.1 * a
    }

    /// Positive lower bounds and finite upper bounds.
    pub fn satisfied(&self) -> bool {
        let lows = [self.a_diag.0, self.c.0, self.p.0, self.q.0, self.r.0];
        let highs = [self.a_diag.1, self.a_cross_max, self.c.1, self.p.1, self.q.1, self.r.1, self.l.1];
        lows.iter().all(|&v| v > 0.0) && highs.iter().all(|v| v.is_finite())
    }
}

fn widen(range: &mut (f64, f64), v: f64) {
    range.0 = range.0.min(v);
    range.1 = range.1.max(v);
}

const EMPTY: (f64, f64) = (f64::INFINITY, f64::NEG_INFINITY);

/// Scans a run for the matrix bounds.
pub fn check_assumption2<T: Scalar>(record: &EstimationRecord<T>) -> Result<BoundsTable> {
    let p = &record.partition;
    let n = p.n_subsystems();
    let mut t = BoundsTable {
        subsystems: n,
        a_diag: EMPTY,
        a_cross_max: 0.0,
        c: EMPTY,
        p: EMPTY,
        q: EMPTY,
        r: EMPTY,
        l: EMPTY,
        f_observed: 0.0,
    };
    for q in &record.q_blocks {
        let (lo, hi) = eig_range(q);
        widen(&mut t.q, lo.as_f64());
        widen(&mut t.q, hi.as_f64());
    }
    let (lo, hi) = eig_range(&record.r);
    t.r = (lo.as_f64(), hi.as_f64());
    for (k, step) in record.steps.iter().enumerate() {
        for i in 0..n {
            let (o, d) = (p.offset(i), p.dim(i));
            widen(&mut t.c, spectral_norm(&step.c.columns(o, d).into_owned()).as_f64());
            let (lo, hi) = eig_range(&step.covariances[i]);
            widen(&mut t.p, lo.as_f64());
            widen(&mut t.p, hi.as_f64());
            if k == 0 {
                continue;
            }
            widen(&mut t.l, spectral_norm(&step.gains[i]).as_f64());
            let a = step.a_prev.as_ref().ok_or_else(|| Error::MissingRecord(format!("A_{{k-1}} at k={k}")))?;
            for j in 0..n {
                let blk = a.view((o, p.offset(j)), (d, p.dim(j))).into_owned();
                let norm = spectral_norm(&blk).as_f64();
                if i == j {
                    widen(&mut t.a_diag, norm);
                } else {
                    t.a_cross_max = t.a_cross_max.max(norm);
                }
            }
        }
        if k > 0 {
            let f = transition_at(record, k)?;
            for i in 0..n {
                let (o, d) = (p.offset(i), p.dim(i));
                t.f_observed = t.f_observed.max(spectral_norm(&f.view((o, o), (d, d)).into_owned()).as_f64());
            }
        }
    }
    Ok(t)
}

/// Contraction check `F_iiᵀ Π_{i,k|k} F_ii ≤ (1 − α) Π_{i,k-1|k-1}` at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionStep {
    pub k: usize,
    /// Smallest eigenvalue of `(1 − α)Π_{k-1} − F_iiᵀΠ_k F_ii` over subsystems.
    pub margin: f64,
    /// Largest `α` for which the inequality holds at this instant, over subsystems.
    pub direct_alpha: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop2Report {
    /// `α = x / (1 + x)`, `x = l̲² r̲ / (p̄ f̄²)`; `None` when `l̲ = 0`.
    pub alpha: Option<f64>,
    pub steps: Vec<ContractionStep>,
}

impl Prop2Report {
    pub fn holds(&self) -> bool {
        self.alpha.is_some() && self.steps.iter().all(|s| s.holds)
    }

    pub fn min_direct_alpha(&self) -> f64 {
        self.steps.iter().map(|s| s.direct_alpha).fold(f64::INFINITY, f64::min)
    }
}

/// `α` from the bound formula.
pub fn alpha_from_bounds(bounds: &BoundsTable) -> Option<f64> {
    let l_lo = bounds.l.0;
    if !(l_lo > 0.0) {
        return None;
    }
    let f = bounds.f_upper();
    let x = l_lo * l_lo * bounds.r.0 / (bounds.p.1 * f * f);
    Some(x / (1.0 + x))
}

/// Verifies the contraction inequality at every `k ≥ 1` with `α` from the bounds.
pub fn check_prop2<T: Scalar>(record: &EstimationRecord<T>, bounds: &BoundsTable) -> Result<Prop2Report> {
    let alpha = alpha_from_bounds(bounds);
    let a = T::of(alpha.unwrap_or(0.0));
    let p = &record.partition;
    let mut steps = Vec::with_capacity(record.steps.len());
    for k in 1..record.steps.len() {
        let f = transition_at(record, k)?;
        let pi_prev = inverse_blocks(&record.steps[k - 1].covariances, k - 1)?;
        let pi = inverse_blocks(&record.steps[k].covariances, k)?;
        let mut margin = f64::INFINITY;
        let mut direct_alpha = f64::INFINITY;
        let mut holds = true;
        for i in 0..p.n_subsystems() {
            let (o, d) = (p.offset(i), p.dim(i));
            let f_ii = f.view((o, o), (d, d)).into_owned();
            let lhs = f_ii.transpose() * &pi[i] * &f_ii;
            let rhs = &pi_prev[i] * (T::one() - a);
            let m = eig_range(&(&rhs - &lhs)).0.as_f64();
            let scale = spectral_norm(&rhs).as_f64().max(1.0);
            holds &= m >= -PROP2_REL_TOL * scale;
            margin = margin.min(m);
            let chol = crate::linalg::cholesky(&pi_prev[i]).ok_or(Error::CovarianceCollapse { index: i, k: k - 1 })?;
            let l_inv = chol.l().try_inverse().ok_or(Error::CovarianceCollapse { index: i, k: k - 1 })?;
            let ratio = &l_inv * &lhs * l_inv.transpose();
            direct_alpha = direct_alpha.min(1.0 - eig_range(&ratio).1.as_f64());
        }
        steps.push(ContractionStep { k, margin, direct_alpha, holds: holds && alpha.is_some() });
    }
    Ok(Prop2Report { alpha, steps })
}

/// Lyapunov value `V_k = e_{k|k}ᵀ Π_{k|k} e_{k|k}` for every recorded instant.
pub fn lyapunov<T: Scalar>(record: &EstimationRecord<T>, states: &[nalgebra::DVector<T>]) -> Result<Vec<f64>> {
    record
        .steps
        .iter()
        .enumerate()
        .map(|(k, step)| {
            let e = states.get(k).ok_or_else(|| Error::MissingRecord(format!("true state at k={k}")))? - &step.estimate;
            let pi = block_diag(&inverse_blocks(&step.covariances, k)?);
            Ok(e.dot(&(pi * &e)).as_f64())
        })
        .collect()
}

/// Instants where `V_{k-1}` exceeds `threshold` but `V_k` does not decrease.
pub fn lyapunov_ascents(values: &[f64], threshold: f64) -> Vec<usize> {
    (1..values.len()).filter(|&k| values[k - 1] > threshold && values[k] >= values[k - 1]).collect()
}
