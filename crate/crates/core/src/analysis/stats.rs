use nalgebra::DVector;

use super::recursion::ErrorDecomposition;
use crate::Scalar;

/// `sqrt(‖x̂ − x‖² / n_total)`.
pub fn rmse<T: Scalar>(estimate: &DVector<T>, truth: &DVector<T>, n_total: usize) -> f64 {
    ((estimate - truth).norm_squared().as_f64() / n_total as f64).sqrt()
}

/// RMSE at every instant, with `n_total` the state dimension.
pub fn rmse_sequence<T: Scalar>(estimates: &[DVector<T>], truth: &[DVector<T>]) -> Vec<f64> {
    estimates.iter().zip(truth).map(|(e, x)| rmse(e, x, x.len())).collect()
}

/// Per-instant mean, minimum and maximum over an ensemble of equal-length series.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub runs: usize,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl EnsembleStats {
    pub fn from_series(series: &[Vec<f64>]) -> Self {
        let len = series.iter().map(Vec::len).min().unwrap_or(0);
        let runs = series.len();
        let mut mean = vec![0.0; len];
        let mut min = vec![f64::INFINITY; len];
        let mut max = vec![f64::NEG_INFINITY; len];
        for s in series {
            for k in 0..len {
                mean[k] += s[k];
                min[k] = min[k].min(s[k]);
                max[k] = max[k].max(s[k]);
            }
        }
        for m in &mut mean {
            *m /= runs as f64;
        }
        Self { runs, mean, min, max }
    }
}

/// Quadratic fit `‖remainder‖ ≈ ε ‖error‖²` through the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub epsilon: f64,
    /// Root-mean-square fit residual.
    pub residual: f64,
    /// Largest error norm covered by the data.
    pub radius: f64,
    pub samples: usize,
}

impl QuadraticFit {
    pub fn fit(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        let sxx: f64 = pairs.iter().map(|(e, _)| e.powi(4)).sum();
        let sxy: f64 = pairs.iter().map(|(e, r)| e * e * r).sum();
        let epsilon = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        let sq: f64 = pairs.iter().map(|(e, r)| (r - epsilon * e * e).powi(2)).sum();
        let residual = if pairs.is_empty() { 0.0 } else { (sq / pairs.len() as f64).sqrt() };
        let radius = pairs.iter().map(|(e, _)| *e).fold(0.0, f64::max);
        Self { epsilon, residual, radius, samples: pairs.len() }
    }
}

/// Empirical remainder constants `ε_φ`, `ε_ϕ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderBounds {
    pub dynamics: QuadraticFit,
    pub output: QuadraticFit,
}

pub fn remainder_bounds<T: Scalar>(steps: &[ErrorDecomposition<T>]) -> RemainderBounds {
    RemainderBounds {
        dynamics: QuadraticFit::fit(steps.iter().map(|d| (d.previous_error.norm().as_f64(), d.dynamics_remainder.norm().as_f64()))),
        output: QuadraticFit::fit(steps.iter().map(|d| (d.prior_error.norm().as_f64(), d.output_remainder.norm().as_f64()))),
    }
}
