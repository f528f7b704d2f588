mod common;

use common::*;
use distkf_core::analysis::rmse;
use distkf_core::benchmarks;
use distkf_core::dkf::{run_dkf, DistributedKalmanFilter, ExchangeSnapshot, LocalKalmanFilter, Prior};
use distkf_core::linalg::is_spd;
use distkf_core::model::{make_partition, LinearModel, LinearSubsystem};
use distkf_core::simulate::{simulate, NoiseSpec};
use distkf_core::Schedule;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

struct Kf {
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl Kf {
    fn init(m: &LinearModel<f64>, mean: &DVector<f64>, p: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let c = m.c();
        let k = p * c.transpose() * (c * p * c.transpose() + m.r()).try_inverse().unwrap();
        Kf { x: mean + &k * (y - c * mean), p: p - &k * c * p }
    }

    fn step(&mut self, m: &LinearModel<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        let (a, c) = (m.a(), m.c());
        let xp = a * &self.x;
        let pp = a * &self.p * a.transpose() + m.q();
        let k = &pp * c.transpose() * (c * &pp * c.transpose() + m.r()).try_inverse().unwrap();
        self.x = &xp + &k * (y - c * &xp);
        self.p = &pp - &k * c * &pp;
        k
    }
}

fn snapshot_from(m: &LinearModel<f64>, x: &DVector<f64>) -> ExchangeSnapshot<f64> {
    let p = m.partition();
    let states: Vec<_> = (0..p.n_subsystems())
        .map(|i| distkf_core::dkf::EstimatorState {
            index: i,
            k: 0,
            estimate: p.local(x, i),
            covariance: DMatrix::identity(p.dim(i), p.dim(i)),
            gain: DMatrix::zeros(p.dim(i), p.output_dim()),
        })
        .collect();
    ExchangeSnapshot::from_states(1, &states)
}

#[test]
fn prediction_with_identity_blocks_is_previous_estimate() {
    let m = benchmarks::decoupled_linear::<f64>(1.0, 1.0).unwrap();
    let ident = LinearModel::from_dense(m.partition().clone(), &DMatrix::identity(4, 4), m.c(), vec![DMatrix::identity(2, 2); 2], vec![dmatrix![1.0], dmatrix![1.0]]).unwrap();
    let x = dvector![1.0, 2.0, 3.0, 4.0];
    let snap = snapshot_from(&ident, &x);
    for i in 0..2 {
        let pred = LocalKalmanFilter::new(&ident, i).predict(&snap).unwrap();
        assert_eq!(pred, ident.partition().local(&x, i));
    }
}

#[test]
fn prediction_from_exact_initial_state() {
    let m = paper();
    let x0 = benchmarks::vector(&benchmarks::PAPER_X0);
    let snap = snapshot_from(&m, &x0);
    let ax = benchmarks::matrix::<f64, 4, 4>(&benchmarks::PAPER_A) * &x0;
    let pred = LocalKalmanFilter::new(&m, 0).predict(&snap).unwrap();
    assert!((pred - ax.rows(0, 2)).amax() < 1e-14);
}

#[test]
fn single_partition_gain_is_standard_kf_gain() {
    let m = paper().centralized().unwrap();
    let f = LocalKalmanFilter::new(&m, 0);
    let p = dmatrix![2.0, 0.1, 0.0, 0.3; 0.1, 1.5, 0.2, 0.0; 0.0, 0.2, 3.0, 0.1; 0.3, 0.0, 0.1, 1.0];
    let pp = m.a() * &p * m.a().transpose() + m.q();
    let expected = &pp * m.c().transpose() * (m.c() * &pp * m.c().transpose() + m.r()).try_inverse().unwrap();
    assert!(rel_m(&f.gain(&p, 1).unwrap(), &expected) < 1e-12);
}

#[test]
fn no_outputs_means_zero_gain_and_open_loop_covariance() {
    let part = make_partition(&[2, 2], &[1, 1]).unwrap();
    let a = benchmarks::matrix::<f64, 4, 4>(&benchmarks::PAPER_A);
    let m = LinearModel::from_dense(part, &a, &DMatrix::zeros(2, 4), vec![DMatrix::identity(2, 2); 2], vec![dmatrix![1.0], dmatrix![1.0]]).unwrap();
    let p = dmatrix![2.0, 0.3; 0.3, 1.0];
    for i in 0..2 {
        let f = LocalKalmanFilter::new(&m, i);
        let (gain, cov) = f.gain_covariance(&p, 1).unwrap();
        assert_eq!(gain.amax(), 0.0);
        let a_ii = m.a_block(i, i);
        let expected = &a_ii * &p * a_ii.transpose() + m.q_block(i);
        assert!((cov - expected).amax() < 1e-14);
    }
}

#[test]
fn first_gain_matches_closed_form_coefficient() {
    let m = paper();
    let truth = paper_truth(&m, 1, 4);
    let prior = paper_prior(&m);
    let rec = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    let r_inv = m.r().clone().try_inverse().unwrap();
    let c = m.c();
    for i in 0..2 {
        let c_i = m.c_cols(i);
        let p00 = (prior.covariances[i].clone().try_inverse().unwrap() + c_i.transpose() * &r_inv * &c_i).try_inverse().unwrap();
        assert!(rel_m(&rec.steps[0].covariances[i], &p00) < 1e-10);
        let a_col = m.a_cols(i);
        let a_ii = m.a_block(i, i);
        let q = m.q_block(i);
        let coeff = (&a_ii * &p00 * a_col.transpose() * c.transpose() + q * c_i.transpose())
            * (c * &a_col * &p00 * a_col.transpose() * c.transpose() + &c_i * q * c_i.transpose() + m.r()).try_inverse().unwrap();
        assert!(rel_m(&rec.steps[1].gains[i], &coeff) < 1e-10, "subsystem {i}");
    }
}

#[test]
fn zero_gain_keeps_prediction() {
    let m = paper();
    let x = benchmarks::vector(&benchmarks::PAPER_X0);
    let snap = snapshot_from(&m, &x);
    let f = LocalKalmanFilter::new(&m, 1);
    let pred = f.predict(&snap).unwrap();
    let preds = (0..2).map(|i| LocalKalmanFilter::new(&m, i).predict(&snap).unwrap()).collect();
    let snap = snap.with_predictions(preds, dvector![100.0, -100.0]);
    let out = f.update(&pred, &snap, &DMatrix::zeros(2, 2)).unwrap();
    assert_eq!(out, pred);
}

#[test]
fn noiseless_exact_start_tracks_truth() {
    let m = paper();
    let x0 = benchmarks::vector(&benchmarks::PAPER_X0);
    let truth = simulate(&m, &x0, 20, &NoiseSpec::zero(4, 2)).unwrap();
    let prior = Prior::isotropic(x0, m.partition(), 100.0);
    let rec = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    for (step, x) in rec.steps.iter().zip(&truth.states) {
        assert!((&step.estimate - x).amax() < 1e-12, "k={}", step.k);
        assert!((&step.prediction - x).amax() < 1e-12);
    }
}

#[test]
fn single_partition_matches_kalman_filter() {
    let m = paper().centralized().unwrap();
    let truth = paper_truth(&m, 50, 1);
    let prior = Prior::isotropic(benchmarks::vector(&benchmarks::PAPER_GUESS), m.partition(), 100.0);
    let rec = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    let mut kf = Kf::init(&m, &prior.mean, &prior.covariance(), &truth.measurements[0]);
    for k in 0..=50 {
        if k > 0 {
            kf.step(&m, &truth.measurements[k]);
        }
        assert!(rel(&rec.steps[k].estimate, &kf.x) < 1e-10, "k={k}");
        assert!(rel_m(&rec.steps[k].covariances[0], &kf.p) < 1e-10, "k={k}");
    }
}

#[test]
fn covariance_stays_spd_for_a_thousand_steps() {
    let m = paper();
    let truth = paper_truth(&m, 1000, 8);
    let rec = run_dkf(&m, &paper_prior(&m), &truth.measurements, Schedule::Sequential).unwrap();
    for step in &rec.steps {
        for p in &step.covariances {
            assert!(is_spd(p) && (p - p.transpose()).amax() == 0.0);
        }
    }
}

#[test]
fn schedules_are_bit_identical() {
    let m = benchmarks::paper_linear::<f64>(1.0, 1.0).unwrap();
    let truth = paper_truth(&m, 100, 5);
    let prior = paper_prior(&m);
    let base = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    for schedule in [Schedule::Order(vec![1, 0]), Schedule::Parallel] {
        assert_eq!(run_dkf(&m, &prior, &truth.measurements, schedule).unwrap(), base);
    }
}

#[test]
fn three_subsystems_orders_agree() {
    let part = make_partition(&[1, 2, 1], &[1, 1, 1]).unwrap();
    let subs = vec![
        LinearSubsystem::new(0, dmatrix![0.9], dmatrix![1.0], dmatrix![0.1], dmatrix![0.2]).unwrap().with_coupling(1, dmatrix![0.05, 0.0]),
        LinearSubsystem::new(1, dmatrix![0.8, 0.1; 0.0, 0.7], dmatrix![1.0, 0.0], DMatrix::identity(2, 2) * 0.1, dmatrix![0.2])
            .unwrap()
            .with_coupling(2, dmatrix![0.0; 0.1]),
        LinearSubsystem::new(2, dmatrix![0.95], dmatrix![1.0], dmatrix![0.1], dmatrix![0.2]).unwrap().with_coupling(0, dmatrix![-0.1]),
    ];
    let m = LinearModel::assemble(subs, part).unwrap();
    let noise = NoiseSpec::gaussian(DVector::from_element(4, 0.3), DVector::from_element(3, 0.4), 21);
    let truth = simulate(&m, &dvector![1.0, -1.0, 0.5, 2.0], 60, &noise).unwrap();
    let prior = Prior::isotropic(DVector::zeros(4), m.partition(), 4.0);
    let base = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    for order in [vec![2, 1, 0], vec![1, 2, 0], vec![0, 2, 1]] {
        assert_eq!(run_dkf(&m, &prior, &truth.measurements, Schedule::Order(order)).unwrap(), base);
    }
    assert_eq!(run_dkf(&m, &prior, &truth.measurements, Schedule::Parallel).unwrap(), base);
}

#[test]
fn stepwise_driver_matches_batch_run() {
    let m = paper();
    let truth = paper_truth(&m, 10, 3);
    let prior = paper_prior(&m);
    let rec = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
    let (mut dkf, first) = DistributedKalmanFilter::initialize(&m, &prior, &truth.measurements[0]).unwrap();
    assert_eq!(first, rec.steps[0]);
    for k in 1..=10 {
        assert_eq!(dkf.step(&truth.measurements[k]).unwrap(), rec.steps[k]);
        assert_eq!(dkf.k(), k);
    }
    let resumed = DistributedKalmanFilter::from_states(&m, dkf.states().to_vec()).unwrap();
    assert_eq!(resumed.estimate(), dkf.estimate());
}

#[test]
fn error_stays_bounded_from_the_printed_guess() {
    let m = paper();
    let prior = paper_prior(&m);
    let (mut start, mut end) = (0.0, 0.0);
    for seed in 0..50 {
        let truth = paper_truth(&m, 50, seed);
        let rec = run_dkf(&m, &prior, &truth.measurements, Schedule::Sequential).unwrap();
        start += rmse(&prior.mean, &truth.states[0], 4);
        end += rmse(&rec.steps[50].estimate, &truth.states[50], 4);
    }
    assert!(end.is_finite() && start.is_finite());
    assert!(end < 10.0 * start);
}
