mod common;

use std::sync::Arc;

use common::*;
use distkf_core::analysis::rmse;
use distkf_core::benchmarks;
use distkf_core::dekf::{run_dekf, DistributedEkf};
use distkf_core::dkf::{run_dkf, ExchangeSnapshot, Prior};
use distkf_core::linalg::is_spd;
use distkf_core::model::{dynamics_jacobian, output_jacobian, JacobianMode, NonlinearModel};
use distkf_core::simulate::{simulate, NoiseSpec};
use distkf_core::Schedule;
use nalgebra::{DMatrix, DVector};

fn analytic() -> JacobianMode {
    JacobianMode::Analytic
}

#[test]
fn affine_wrapper_reproduces_linear_filter() {
    let lin = paper();
    let m = Arc::new(NonlinearModel::from_linear(&lin).unwrap());
    let truth = paper_truth(&lin, 100, 1);
    let prior = paper_prior(&lin);
    let a = run_dkf(&lin, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    let b = run_dekf(m, &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.estimate, y.estimate);
        assert_eq!(x.prediction, y.prediction);
        assert_eq!(x.gains, y.gains);
        assert_eq!(x.covariances, y.covariances);
        assert_eq!(x.a_prev, y.a_prev);
        assert_eq!(x.c, y.c);
    }
}

#[test]
fn steady_state_without_noise_predicts_steady_state() {
    let m = reactor(1.0);
    let xs = benchmarks::vector::<f64>(&benchmarks::REACTOR_STEADY_STATE);
    let truth = simulate(m.as_ref(), &xs, 50, &NoiseSpec::zero(8, 8)).unwrap();
    let prior = Prior::isotropic(xs.clone(), m.partition(), 0.01);
    let rec = run_dekf(m, &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    for step in &rec.steps[1..] {
        assert!((&step.prediction - &xs).amax() < 1e-9);
        assert!((&step.estimate - &xs).amax() < 1e-9);
    }
}

#[test]
fn offset_guess_prediction_is_finite_and_in_box() {
    let m = reactor(1.0);
    let truth = reactor_truth(&m, 5, 0);
    let prior = reactor_prior();
    let rec = run_dekf(m.clone(), &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    let b = m.state_box().unwrap();
    for step in &rec.steps {
        assert!(step.prediction.iter().all(|v| v.is_finite()));
        assert_eq!(b.violation(&step.prediction), None);
    }
}

#[test]
fn analytic_and_finite_difference_gains_agree() {
    let m = reactor(1.0);
    let truth = reactor_truth(&m, 100, 4);
    let prior = reactor_prior();
    let a = run_dekf(m.clone(), &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    let f = run_dekf(m, &prior, &truth.measurements, JacobianMode::FiniteDifference, Schedule::Sequential).unwrap();
    for (x, y) in a.steps.iter().zip(&f.steps) {
        for (ga, gf) in x.gains.iter().zip(&y.gains) {
            assert!(rel_m(gf, ga) < 1e-4, "k={}", x.k);
        }
    }
}

#[test]
fn covariances_stay_spd_without_floor_events() {
    for model in [reactor(1.0), reactor_paper_weights(1.0), reactor(100.0)] {
        let truth = reactor_truth(&model, 500, 6);
        let rec = run_dekf(model, &reactor_prior(), &truth.measurements, analytic(), Schedule::Sequential).unwrap();
        assert!(rec.steps.iter().all(|s| s.covariances.iter().all(is_spd)));
        assert_eq!(rec.floor_events(), 0);
    }
}

#[test]
fn matching_prediction_keeps_prediction() {
    let m = reactor(1.0);
    let xs = benchmarks::vector::<f64>(&benchmarks::REACTOR_X0);
    let truth = simulate(m.as_ref(), &xs, 1, &NoiseSpec::zero(8, 8)).unwrap();
    let prior = Prior::isotropic(xs, m.partition(), 0.01);
    let (ekf, _) = DistributedEkf::initialize(m.clone(), &prior, &truth.measurements[0], analytic()).unwrap();
    let states: Vec<_> = ekf.agents().iter().map(|a| a.state.clone()).collect();
    let snap = ExchangeSnapshot::from_states(1, &states);
    let preds: Vec<_> = ekf.agents().iter().map(|a| a.predict(&snap).unwrap().0).collect();
    let stacked = distkf_core::linalg::stack(&preds);
    let snap = snap.with_predictions(preds.clone(), m.h(&stacked).unwrap());
    let gain = DMatrix::from_element(2, 8, 3.0);
    for (i, agent) in ekf.agents().iter().enumerate() {
        assert_eq!(agent.update(&preds[i], &snap, &gain).unwrap(), preds[i]);
    }
}

/// Classical EKF on the global maps with explicit inverses.
fn ekf_reference(m: &NonlinearModel<f64>, prior: &Prior<f64>, ys: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let update = |x: &DVector<f64>, p: &DMatrix<f64>, y: &DVector<f64>| {
        let c = output_jacobian(m, x, analytic()).unwrap();
        let k = p * c.transpose() * (&c * p * c.transpose() + m.r()).try_inverse().unwrap();
        (x + &k * (y - m.h(x).unwrap()), p - &k * &c * p)
    };
    let (mut x, mut p) = update(&prior.mean, &prior.covariance(), &ys[0]);
    let mut out = vec![x.clone()];
    for y in &ys[1..] {
        let a = dynamics_jacobian(m, &x, analytic()).unwrap();
        let pp = &a * &p * a.transpose() + m.q();
        (x, p) = update(&m.f(&x).unwrap(), &pp, y);
        out.push(x.clone());
    }
    out
}

#[test]
fn single_partition_matches_global_ekf() {
    let m = reactor(1.0);
    let c = Arc::new(m.centralized().unwrap());
    let truth = reactor_truth(&m, 100, 3);
    let prior = Prior::isotropic(benchmarks::vector(&benchmarks::REACTOR_GUESS), c.partition(), 0.01);
    let rec = run_dekf(c.clone(), &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    let reference = ekf_reference(&c, &prior, &truth.measurements);
    for (step, x) in rec.steps.iter().zip(&reference) {
        assert!(rel(&step.estimate, x) < 1e-9, "k={}", step.k);
    }
}

#[test]
fn linearization_points_are_posterior_and_prediction() {
    let m = reactor(1.0);
    let truth = reactor_truth(&m, 20, 1);
    let rec = run_dekf(m.clone(), &reactor_prior(), &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    for k in 1..rec.steps.len() {
        let step = &rec.steps[k];
        let a_point = step.a_point.as_ref().unwrap();
        assert_eq!(a_point, &rec.steps[k - 1].estimate);
        assert_eq!(step.c_point, step.prediction);
        assert_eq!(step.a_prev.as_ref().unwrap(), &dynamics_jacobian(&m, a_point, analytic()).unwrap());
        assert_eq!(step.c, output_jacobian(&m, &step.prediction, analytic()).unwrap());
    }
}

#[test]
fn noiseless_exact_prior_tracks_truth() {
    let m = reactor(1.0);
    let x0 = benchmarks::vector::<f64>(&benchmarks::REACTOR_X0);
    let truth = simulate(m.as_ref(), &x0, 300, &NoiseSpec::zero(8, 8)).unwrap();
    let prior = Prior::isotropic(x0, m.partition(), 0.01);
    let rec = run_dekf(m, &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    for (step, x) in rec.steps.iter().zip(&truth.states) {
        assert!((&step.estimate - x).norm() <= 1e-8, "k={}", step.k);
    }
}

#[test]
fn paper_weights_keep_error_bounded_after_transient() {
    let m = reactor_paper_weights(1.0);
    let truth = reactor_truth(&m, 500, 12);
    let prior = reactor_prior();
    let rec = run_dekf(m, &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    let initial = rmse(&prior.mean, &truth.states[0], 8);
    let late = rec.steps[100..].iter().zip(&truth.states[100..]).map(|(s, x)| rmse(&s.estimate, x, 8)).fold(0.0, f64::max);
    assert!(late < initial, "{late} vs {initial}");
}

#[test]
fn schedules_are_bit_identical() {
    let m = reactor(1.0);
    let truth = reactor_truth(&m, 100, 2);
    let prior = reactor_prior();
    let base = run_dekf(m.clone(), &prior, &truth.measurements, analytic(), Schedule::Sequential).unwrap();
    for schedule in [Schedule::Order(vec![3, 1, 0, 2]), Schedule::Parallel] {
        assert_eq!(run_dekf(m.clone(), &prior, &truth.measurements, analytic(), schedule).unwrap(), base);
    }
}
