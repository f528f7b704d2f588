//! Experiment configuration, read from TOML.
//!
//! ```toml
//! name = "paper-linear-4state"
//! steps = 50
//! runs = 500
//! seed = 1
//! mode = "auto"            # auto | dkf | dekf
//! jacobian = "analytic"    # analytic | finite-difference
//! schedule = "sequential"  # sequential | parallel
//! monitors = true
//! x0 = [-7.0047, 9.0089, 6.0012, -3.0066]
//!
//! [model]
//! kind = "registered"      # registered | linear | reactor-chain
//! name = "paper-linear"
//!
//! [noise]
//! w_std = [1.0, 1.0, 1.0, 1.0]
//! v_std = [1.0, 1.0]
//! bound_sigma = 6.0
//!
//! [estimator]
//! q_diag = [1.0, 1.0, 1.0, 1.0]
//! r_diag = [1.0, 1.0]
//! p0_diag = [100.0, 100.0, 100.0, 100.0]
//! prior_mean = [-7.7052, 9.9089, 6.6013, -3.3073]
//! ```
//!
//! Inline linear models give `dims`, `out_dims` and row-major `a`, `c`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Auto,
    Dkf,
    Dekf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Jacobian {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// A model from the registry: `paper-linear`, `decoupled-linear` or `reactor-chain`.
    Registered {
        name: String,
        #[serde(default = "one")]
        coupling: f64,
    },
    Linear {
        dims: Vec<usize>,
        out_dims: Vec<usize>,
        a: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
    },
    ReactorChain {
        #[serde(default = "one")]
        coupling: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn six() -> Option<f64> {
    Some(6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub w_std: Vec<f64>,
    pub v_std: Vec<f64>,
    /// Truncation at this many standard deviations; ignored where explicit bounds are given.
    #[serde(default = "six")]
    pub bound_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_bound: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_bound: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub q_diag: Vec<f64>,
    pub r_diag: Vec<f64>,
    pub p0_diag: Vec<f64>,
    pub prior_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub steps: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub jacobian: Jacobian,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default = "default_true")]
    pub monitors: bool,
    pub x0: Vec<f64>,
    pub model: ModelSpec,
    pub noise: NoiseConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_runs() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(invalid(format!("{what} has {} entries, expected {n}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(e.to_string()))
    }

    /// Checks scalar fields and vector lengths against the state and output dimensions.
    pub fn validate(&self, nx: usize, ny: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if self.runs == 0 {
            return Err(invalid("runs must be at least 1"));
        }
        check_len("x0", &self.x0, nx)?;
        check_len("noise.w_std", &self.noise.w_std, nx)?;
        check_len("noise.v_std", &self.noise.v_std, ny)?;
        if let Some(b) = &self.noise.w_bound {
            check_len("noise.w_bound", b, nx)?;
        }
        if let Some(b) = &self.noise.v_bound {
            check_len("noise.v_bound", b, ny)?;
        }
        if let Some(s) = self.noise.bound_sigma {
            if !(s >= 1.0) {
                return Err(invalid("noise.bound_sigma must be at least 1"));
            }
        }
        let e = &self.estimator;
        check_len("estimator.q_diag", &e.q_diag, nx)?;
        check_len("estimator.r_diag", &e.r_diag, ny)?;
        check_len("estimator.p0_diag", &e.p0_diag, nx)?;
        check_len("estimator.prior_mean", &e.prior_mean, nx)?;
        for (what, v) in [("q_diag", &e.q_diag), ("r_diag", &e.r_diag), ("p0_diag", &e.p0_diag)] {
            if v.iter().any(|x| *x <= 0.0) {
                return Err(invalid(format!("estimator.{what} must be positive")));
            }
        }
        if self.noise.w_std.iter().chain(&self.noise.v_std).any(|x| *x < 0.0) {
            return Err(invalid("noise standard deviations must be non-negative"));
        }
        Ok(())
    }
}
