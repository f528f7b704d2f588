#![allow(dead_code)]

use std::sync::Arc;

use distkf_core::benchmarks::{self, ReactorParams};
use distkf_core::dkf::Prior;
use distkf_core::model::{LinearModel, NonlinearModel};
use distkf_core::simulate::{simulate, NoiseSpec, Trajectory};
use nalgebra::{DMatrix, DVector};

pub fn paper() -> LinearModel<f64> {
    benchmarks::paper_linear(1.0, 1.0).unwrap()
}

pub fn paper_prior(model: &LinearModel<f64>) -> Prior<f64> {
    Prior::isotropic(benchmarks::vector(&benchmarks::PAPER_GUESS), model.partition(), benchmarks::PAPER_PRIOR_VARIANCE)
}

pub fn unit_noise(nx: usize, ny: usize, seed: u64) -> NoiseSpec<f64> {
    NoiseSpec::gaussian(DVector::from_element(nx, 1.0), DVector::from_element(ny, 1.0), seed).with_sigma_bound(6.0)
}

pub fn paper_truth(model: &LinearModel<f64>, steps: usize, seed: u64) -> Trajectory<f64> {
    let x0 = benchmarks::vector(&benchmarks::PAPER_X0);
    simulate(model, &x0, steps, &unit_noise(4, 2, seed)).unwrap()
}

pub fn reactor_std() -> (Vec<f64>, Vec<f64>) {
    let params = ReactorParams::default();
    let w = params.steady_state.iter().map(|x| 1e-3 * x).collect();
    let v = benchmarks::reactor_steady_output(&params).iter().map(|y| 1e-3 * y).collect();
    (w, v)
}

/// Reactor chain with estimator weights equal to the true noise variances.
pub fn reactor(coupling: f64) -> Arc<NonlinearModel<f64>> {
    let (w, v) = reactor_std();
    let q: Vec<f64> = w.iter().map(|s| s * s).collect();
    let r: Vec<f64> = v.iter().map(|s| s * s).collect();
    Arc::new(benchmarks::reactor_chain(&ReactorParams::default(), coupling, &q, &r).unwrap())
}

pub fn reactor_paper_weights(coupling: f64) -> Arc<NonlinearModel<f64>> {
    Arc::new(benchmarks::reactor_chain(&ReactorParams::default(), coupling, &[150.0; 8], &[1.0; 8]).unwrap())
}

pub fn reactor_noise(seed: u64) -> NoiseSpec<f64> {
    let (w, v) = reactor_std();
    NoiseSpec::gaussian(DVector::from_vec(w), DVector::from_vec(v), seed).with_sigma_bound(6.0)
}

pub fn reactor_prior() -> Prior<f64> {
    let p = distkf_core::model::make_partition(&[2; 4], &[2; 4]).unwrap();
    Prior::isotropic(benchmarks::vector(&benchmarks::REACTOR_GUESS), &p, 0.01)
}

pub fn reactor_truth(model: &NonlinearModel<f64>, steps: usize, seed: u64) -> Trajectory<f64> {
    simulate(model, &benchmarks::vector(&benchmarks::REACTOR_X0), steps, &reactor_noise(seed)).unwrap()
}

pub fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_m(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
