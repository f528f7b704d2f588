//! Named models and ready-to-run experiment fixtures.

use std::sync::Arc;

use distkf_core::benchmarks::{self, ReactorParams};
use distkf_core::model::{make_partition, LinearModel, NonlinearModel, StatePartition, SystemModel};
use nalgebra::DMatrix;

use crate::config::{EstimatorConfig, ExperimentConfig, ModelSpec, NoiseConfig, OutputConfig};
use crate::error::{HarnessError, Result};

pub const MODELS: &[&str] = &["paper-linear", "decoupled-linear", "reactor-chain"];

pub const FIXTURES: &[&str] = &[
    "paper-linear-4state",
    "decoupled-linear",
    "reactor-chain",
    "reactor-chain-paper-weights",
    "reactor-chain-strong",
];

/// A model ready for the filters.
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Linear(LinearModel<f64>),
    Nonlinear(Arc<NonlinearModel<f64>>),
}

impl BuiltModel {
    pub fn system(&self) -> &dyn SystemModel<f64> {
        match self {
            BuiltModel::Linear(m) => m,
            BuiltModel::Nonlinear(m) => m.as_ref(),
        }
    }

    pub fn partition(&self) -> &StatePartition {
        self.system().partition()
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, BuiltModel::Linear(_))
    }
}

/// State and output dimensions per subsystem.
pub fn model_dims(spec: &ModelSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    match spec {
        ModelSpec::Registered { name, .. } => match name.as_str() {
            "paper-linear" | "decoupled-linear" => Ok((vec![2, 2], vec![1, 1])),
            "reactor-chain" => Ok((vec![2; 4], vec![2; 4])),
            other => Err(HarnessError::UnknownModel(other.to_string())),
        },
        ModelSpec::Linear { dims, out_dims, .. } => Ok((dims.clone(), out_dims.clone())),
        ModelSpec::ReactorChain { .. } => Ok((vec![2; 4], vec![2; 4])),
    }
}

fn dense(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(HarnessError::Config(format!("{what} must be {nrows}×{ncols}")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn diag_blocks(values: &[f64], partition: &StatePartition, outputs: bool) -> Vec<DMatrix<f64>> {
    (0..partition.n_subsystems())
        .map(|i| {
            let range = if outputs { partition.out_range(i) } else { partition.range(i) };
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&values[range]))
        })
        .collect()
}

fn linear_from_parts(partition: StatePartition, a: &DMatrix<f64>, c: &DMatrix<f64>, est: &EstimatorConfig) -> Result<LinearModel<f64>> {
    let q = diag_blocks(&est.q_diag, &partition, false);
    let r = diag_blocks(&est.r_diag, &partition, true);
    Ok(LinearModel::from_dense(partition, a, c, q, r)?)
}

/// Builds the model with the estimator weights of `est` as `Q_i`, `R_i`.
pub fn build_model(spec: &ModelSpec, est: &EstimatorConfig) -> Result<BuiltModel> {
    let (dims, out_dims) = model_dims(spec)?;
    let partition = make_partition(&dims, &out_dims)?;
    let reactor = |coupling: f64| -> Result<BuiltModel> {
        let m = benchmarks::reactor_chain(&ReactorParams::default(), coupling, &est.q_diag, &est.r_diag)?;
        Ok(BuiltModel::Nonlinear(Arc::new(m)))
    };
    match spec {
        ModelSpec::Registered { name, coupling } => match name.as_str() {
            "paper-linear" | "decoupled-linear" => {
                let mut a: DMatrix<f64> = benchmarks::matrix(&benchmarks::PAPER_A);
                if name == "decoupled-linear" {
                    a.view_mut((0, 2), (2, 2)).fill(0.0);
                    a.view_mut((2, 0), (2, 2)).fill(0.0);
                }
                let c = benchmarks::matrix(&benchmarks::PAPER_C);
                let m = linear_from_parts(partition, &a, &c, est)?;
                Ok(BuiltModel::Linear(if *coupling == 1.0 { m } else { m.with_coupling_scale(*coupling)? }))
            }
            "reactor-chain" => reactor(*coupling),
            other => Err(HarnessError::UnknownModel(other.to_string())),
        },
        ModelSpec::Linear { a, c, .. } => {
            let (nx, ny) = (partition.state_dim(), partition.output_dim());
            let a = dense(a, nx, nx, "model.a")?;
            let c = dense(c, ny, nx, "model.c")?;
            Ok(BuiltModel::Linear(linear_from_parts(partition, &a, &c, est)?))
        }
        ModelSpec::ReactorChain { coupling } => reactor(*coupling),
    }
}

fn paper_fixture(name: &str, model: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        steps: 50,
        runs: 500,
        seed: 1,
        mode: Default::default(),
        jacobian: Default::default(),
        schedule: Default::default(),
        monitors: true,
        x0: benchmarks::PAPER_X0.to_vec(),
        model: ModelSpec::Registered { name: model.to_string(), coupling: 1.0 },
        noise: NoiseConfig { w_std: vec![1.0; 4], v_std: vec![1.0; 2], bound_sigma: Some(6.0), w_bound: None, v_bound: None },
        estimator: EstimatorConfig {
            q_diag: vec![1.0; 4],
            r_diag: vec![1.0; 2],
            p0_diag: vec![benchmarks::PAPER_PRIOR_VARIANCE; 4],
            prior_mean: benchmarks::PAPER_GUESS.to_vec(),
        },
        output: OutputConfig::default(),
    }
}

/// Reactor noise levels: 0.1 % of the steady state and of the steady output.
pub fn reactor_noise_std() -> (Vec<f64>, Vec<f64>) {
    let params = ReactorParams::default();
    let w = params.steady_state.iter().map(|x| 1e-3 * x).collect();
    let v = benchmarks::reactor_steady_output(&params).iter().map(|y| 1e-3 * y).collect();
    (w, v)
}

fn reactor_fixture(name: &str, coupling: f64, paper_weights: bool) -> ExperimentConfig {
    let (w, v) = reactor_noise_std();
    let (q_diag, r_diag) = if paper_weights {
        (vec![150.0; 8], vec![1.0; 8])
    } else {
        (w.iter().map(|s| s * s).collect(), v.iter().map(|s| s * s).collect())
    };
    ExperimentConfig {
        name: name.to_string(),
        steps: 500,
        runs: 20,
        seed: 1,
        mode: Default::default(),
        jacobian: Default::default(),
        schedule: Default::default(),
        monitors: true,
        x0: benchmarks::REACTOR_X0.to_vec(),
        model: ModelSpec::Registered { name: "reactor-chain".to_string(), coupling },
        noise: NoiseConfig { w_std: w, v_std: v, bound_sigma: Some(6.0), w_bound: None, v_bound: None },
        estimator: EstimatorConfig { q_diag, r_diag, p0_diag: vec![0.01; 8], prior_mean: benchmarks::REACTOR_GUESS.to_vec() },
        output: OutputConfig::default(),
    }
}

/// A registered experiment.
pub fn fixture(name: &str) -> Result<ExperimentConfig> {
    match name {
        "paper-linear-4state" => Ok(paper_fixture(name, "paper-linear")),
        "decoupled-linear" => Ok(paper_fixture(name, "decoupled-linear")),
        "reactor-chain" => Ok(reactor_fixture(name, 1.0, false)),
        "reactor-chain-paper-weights" => Ok(reactor_fixture(name, 1.0, true)),
        "reactor-chain-strong" => Ok(reactor_fixture(name, 100.0, false)),
        other => Err(HarnessError::UnknownModel(other.to_string())),
    }
}

/// A fixture by fixture name, or the default fixture of a registered model.
pub fn resolve(name: &str) -> Result<ExperimentConfig> {
    match name {
        "paper-linear" => fixture("paper-linear-4state"),
        other => fixture(other),
    }
}
