mod common;

use std::sync::Arc;

use common::*;
use distkf_core::benchmarks::{self, ReactorParams};
use distkf_core::dekf::run_dekf;
use distkf_core::dkf::run_dkf;
use distkf_core::model::JacobianMode;
use distkf_core::{Dkf32, LinearModel32, NonlinearModel32, Prior32, Schedule};

#[test]
fn single_precision_linear_filter_tracks_double() {
    let m64 = paper();
    let truth = paper_truth(&m64, 30, 1);
    let rec64 = run_dkf(&m64, &paper_prior(&m64), &truth.measurements, Schedule::Sequential).unwrap();

    let m32: LinearModel32 = benchmarks::paper_linear(1.0, 1.0).unwrap();
    let prior = Prior32::isotropic(benchmarks::vector(&benchmarks::PAPER_GUESS), m32.partition(), 100.0);
    let ys: Vec<_> = truth.measurements.iter().map(|y| y.map(|v| v as f32)).collect();
    let (mut dkf, first) = Dkf32::initialize(&m32, &prior, &ys[0]).unwrap();
    let mut estimates = vec![first.estimate];
    for y in &ys[1..] {
        estimates.push(dkf.step(y).unwrap().estimate);
    }
    for (e32, step) in estimates.iter().zip(&rec64.steps) {
        let e = e32.map(f64::from);
        assert!((&e - &step.estimate).amax() < 1e-3 * (1.0 + step.estimate.amax()), "k={}", step.k);
    }
}

#[test]
fn single_precision_reactor_runs() {
    let (w, v) = reactor_std();
    let q: Vec<f64> = w.iter().map(|s| s * s).collect();
    let r: Vec<f64> = v.iter().map(|s| s * s).collect();
    let m: NonlinearModel32 = benchmarks::reactor_chain(&ReactorParams::default(), 1.0, &q, &r).unwrap();
    let m64 = reactor(1.0);
    let truth = reactor_truth(&m64, 50, 2);
    let ys: Vec<_> = truth.measurements.iter().map(|y| y.map(|v| v as f32)).collect();
    let prior = Prior32::isotropic(benchmarks::vector(&benchmarks::REACTOR_GUESS), m.partition(), 0.01);
    let rec = run_dekf(Arc::new(m), &prior, &ys, JacobianMode::Analytic, Schedule::Sequential).unwrap();
    assert_eq!(rec.steps.len(), 51);
    assert!(rec.steps.iter().all(|s| s.estimate.iter().all(|v| v.is_finite())));
}
