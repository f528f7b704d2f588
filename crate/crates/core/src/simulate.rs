//! Ground-truth trajectories under bounded Gaussian disturbances.
//!
//! Every subsystem owns two independent ChaCha8 substreams derived from the
//! master seed: stream `2i` draws `wⁱ`, stream `2i + 1` draws `vⁱ`. Draws are
//! therefore independent of the order in which subsystems are visited.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{StatePartition, SystemModel};
use crate::Scalar;

/// Maximum rejection-sampling redraws per coordinate.
pub const MAX_REDRAWS: usize = 100;

/// Zero-mean noise description for `w` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Scalar> {
    pub w_std: DVector<T>,
    pub v_std: DVector<T>,
    pub w_bound: Option<DVector<T>>,
    pub v_bound: Option<DVector<T>>,
    pub seed: u64,
}

impl<T: Scalar> NoiseSpec<T> {
    /// Unbounded Gaussian noise.
    pub fn gaussian(w_std: DVector<T>, v_std: DVector<T>, seed: u64) -> Self {
        Self { w_std, v_std, w_bound: None, v_bound: None, seed }
    }

    /// No noise at all.
    pub fn zero(nx: usize, ny: usize) -> Self {
        Self::gaussian(DVector::zeros(nx), DVector::zeros(ny), 0)
    }

    /// Truncates each coordinate at `±sigmas · std`.
    pub fn with_sigma_bound(mut self, sigmas: f64) -> Self {
        let s = T::of(sigmas);
        self.w_bound = Some(&self.w_std * s);
        self.v_bound = Some(&self.v_std * s);
        self
    }

    pub fn with_bounds(mut self, w_bound: Option<DVector<T>>, v_bound: Option<DVector<T>>) -> Self {
        self.w_bound = w_bound;
        self.v_bound = v_bound;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, partition: &StatePartition) -> Result<()> {
        if self.w_std.len() != partition.state_dim() || self.v_std.len() != partition.output_dim() {
            return Err(Error::Noise("standard deviation lengths do not match the model".into()));
        }
        let check = |std: &DVector<T>, bound: &Option<DVector<T>>, what: &str| -> Result<()> {
            if std.iter().any(|s| !(*s >= T::zero()) || !s.as_f64().is_finite()) {
                return Err(Error::Noise(format!("{what} standard deviations must be finite and non-negative")));
            }
            if let Some(b) = bound {
                if b.len() != std.len() {
                    return Err(Error::Noise(format!("{what} bound has the wrong length")));
                }
                if b.iter().zip(std.iter()).any(|(b, s)| b < s) {
                    return Err(Error::Noise(format!("{what} bound is smaller than one standard deviation")));
                }
            }
            Ok(())
        };
        check(&self.w_std, &self.w_bound, "process noise")?;
        check(&self.v_std, &self.v_bound, "measurement noise")
    }
}

/// Independent per-subsystem, per-role random streams.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    process: Vec<ChaCha8Rng>,
    measurement: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    pub fn new(seed: u64, n_subsystems: usize) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            process: (0..n_subsystems as u64).map(|i| stream(2 * i)).collect(),
            measurement: (0..n_subsystems as u64).map(|i| stream(2 * i + 1)).collect(),
        }
    }

    pub fn process(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.process[i]
    }

    pub fn measurement(&mut self, i: usize) -> &mut ChaCha8Rng {
        &mut self.measurement[i]
    }
}

/// Draws one zero-mean Gaussian vector, rejection-sampling each coordinate into `bound`.
pub fn sample_noise<T: Scalar, R: rand::Rng>(std: &[T], bound: Option<&[T]>, rng: &mut R) -> Result<DVector<T>> {
    let mut out = DVector::zeros(std.len());
    for (j, &s) in std.iter().enumerate() {
        if s == T::zero() {
            continue;
        }
        let limit = bound.map(|b| b[j]);
        let mut accepted = None;
        for _ in 0..=MAX_REDRAWS {
            let z: f64 = StandardNormal.sample(rng);
            let v = s * T::of(z);
            if limit.is_none_or(|b| v.abs() <= b) {
                accepted = Some(v);
                break;
            }
        }
        out[j] = accepted.ok_or(Error::NoiseBound { coord: j, redraws: MAX_REDRAWS })?;
    }
    Ok(out)
}

/// Deterministic per-run seed derivation (SplitMix64 of `base + run · φ`).
pub fn derive_seed(base: u64, run: u64) -> u64 {
    let mut z = base.wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Realized truth: states `x_0..x_K`, measurements `y_0..y_K` and the noises that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub states: Vec<DVector<T>>,
    pub measurements: Vec<DVector<T>>,
    pub process_noise: Vec<DVector<T>>,
    pub measurement_noise: Vec<DVector<T>>,
    pub seed: u64,
}

impl<T: Scalar> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Largest absolute deviation from `x_{k+1} = f(x_k) + w_k`, `y_k = h(x_k) + v_k`.
    pub fn identity_residual(&self, model: &dyn SystemModel<T>) -> Result<f64> {
        let mut worst = 0.0f64;
        for k in 0..self.states.len() {
            let y = model.h(&self.states[k])? + &self.measurement_noise[k];
            worst = worst.max((y - &self.measurements[k]).amax().as_f64());
            if k + 1 < self.states.len() {
                let x = model.f(&self.states[k])? + &self.process_noise[k];
                worst = worst.max((x - &self.states[k + 1]).amax().as_f64());
            }
        }
        Ok(worst)
    }
}

fn draw<T: Scalar>(
    partition: &StatePartition,
    std: &DVector<T>,
    bound: &Option<DVector<T>>,
    measurement: bool,
    streams: &mut NoiseStreams,
) -> Result<DVector<T>> {
    let mut out = DVector::zeros(std.len());
    for i in 0..partition.n_subsystems() {
        let range = if measurement { partition.out_range(i) } else { partition.range(i) };
        let rng = if measurement { streams.measurement(i) } else { streams.process(i) };
        let b = bound.as_ref().map(|b| &b.as_slice()[range.clone()]);
        let local = sample_noise(&std.as_slice()[range.clone()], b, rng).map_err(|e| match e {
            Error::NoiseBound { coord, redraws } => Error::NoiseBound { coord: coord + range.start, redraws },
            other => other,
        })?;
        out.rows_mut(range.start, range.len()).copy_from(&local);
    }
    Ok(out)
}

/// Simulates `K` steps from `x0`.
pub fn simulate<T: Scalar>(model: &dyn SystemModel<T>, x0: &DVector<T>, steps: usize, noise: &NoiseSpec<T>) -> Result<Trajectory<T>> {
    let p = model.partition();
    p.check_state(x0, "x0")?;
    if steps == 0 {
        return Err(Error::Dimension("at least one step is required".into()));
    }
    if x0.iter().any(|v| !v.as_f64().is_finite()) {
        return Err(Error::NonFinite { index: 0, what: "x0" });
    }
    noise.validate(p)?;
    let in_box = |x: &DVector<T>, step: usize| -> Result<()> {
        match model.state_box().and_then(|b| b.violation(x)) {
            Some(coord) => Err(Error::OutOfBox { step, coord }),
            None => Ok(()),
        }
    };
    let mut streams = NoiseStreams::new(noise.seed, p.n_subsystems());
    in_box(x0, 0)?;
    let mut states = vec![x0.clone()];
    let mut measurement_noise = vec![draw(p, &noise.v_std, &noise.v_bound, true, &mut streams)?];
    let mut measurements = vec![model.h(x0)? + &measurement_noise[0]];
    let mut process_noise = Vec::with_capacity(steps);
    for k in 0..steps {
        let w = draw(p, &noise.w_std, &noise.w_bound, false, &mut streams)?;
        let x = model.f(&states[k])? + &w;
        in_box(&x, k + 1)?;
        let v = draw(p, &noise.v_std, &noise.v_bound, true, &mut streams)?;
        measurements.push(model.h(&x)? + &v);
        states.push(x);
        process_noise.push(w);
        measurement_noise.push(v);
    }
    Ok(Trajectory { states, measurements, process_noise, measurement_noise, seed: noise.seed })
}
