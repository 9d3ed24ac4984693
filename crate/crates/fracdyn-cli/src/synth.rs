//! Deterministic synthetic benchmark generation: stable-ish random
//! fractional systems driven by sparse impulse inputs.

use fracdyn_core::fraccore::simulate_recursive;
use fracdyn_core::numerics::singular_values;
use fracdyn_core::{FractionalOrders, SystemModel, Trajectory};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::CliError;

/// Generation parameters. The same settings and seed always produce the
/// same system and trajectory.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub states: usize,
    pub input_count: usize,
    pub samples: usize,
    /// Fraction of input-matrix entries that carry an impulse.
    pub density: f64,
    /// Impulse magnitude scale.
    pub amplitude: f64,
    /// Observation signal-to-noise ratio in dB; `None` keeps states exact.
    pub snr_db: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            states: 8,
            input_count: 2,
            samples: 256,
            density: 0.02,
            amplitude: 5.0,
            snr_db: None,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), CliError> {
        if self.states < 2 {
            return Err(CliError::Usage("synth needs at least 2 states".into()));
        }
        if self.input_count >= self.states {
            return Err(CliError::Usage(
                "input count must be strictly less than the state count".into(),
            ));
        }
        if self.samples < 2 {
            return Err(CliError::Usage("synth needs at least 2 samples".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(CliError::Usage("density must lie in [0, 1]".into()));
        }
        if !self.amplitude.is_finite() || self.amplitude <= 0.0 {
            return Err(CliError::Usage("amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// Generates a model and a driven trajectory.
///
/// The lag-0 companion matrix `A_0 = A + diag(alpha)` is drawn first and
/// rescaled to spectral norm 0.9; `A` is recovered from it. That bounds the
/// memoryless part but not the whole fractional recursion, so draws whose
/// trajectory still blows up are rejected and redrawn (deterministically,
/// from the same seeded stream). Impulse count is
/// `round(density * (T-1) * p)`, at least 1, at distinct positions.
pub fn generate(spec: &SynthSpec) -> Result<(SystemModel, Trajectory), CliError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.states;
    let p = spec.input_count;
    let t = spec.samples;
    let state_bound = 1e3 * (1.0 + spec.amplitude);

    let mut attempts = 0;
    let (model, mut trajectory) = loop {
        attempts += 1;
        if attempts > 64 {
            return Err(CliError::Usage(
                "synth could not draw a bounded system in 64 attempts; lower --samples or --amplitude".into(),
            ));
        }

        let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.4..1.1)).collect();
        let orders = FractionalOrders::new(alpha).map_err(CliError::from)?;

        let mut a0 = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spectral = singular_values(&a0).map_err(CliError::from)?[0];
        a0 *= 0.9 / spectral;
        let mut a = a0;
        for i in 0..n {
            a[(i, i)] -= orders.get(i);
        }

        let b = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let model = SystemModel::new(orders, a, b).map_err(CliError::from)?;

        // sparse impulses at distinct (step, channel) positions
        let cells = (t - 1) * p;
        let impulses = ((spec.density * cells as f64).round() as usize).clamp(1, cells);
        let mut inputs = DMatrix::zeros(t - 1, p);
        let mut placed = 0usize;
        while placed < impulses {
            let k = rng.random_range(0..t - 1);
            let j = rng.random_range(0..p);
            if inputs[(k, j)] == 0.0 {
                let sign = if rng.random_range(0..2) == 0 { -1.0 } else { 1.0 };
                inputs[(k, j)] = sign * rng.random_range(spec.amplitude * 0.5..spec.amplitude);
                placed += 1;
            }
        }

        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let trajectory = simulate_recursive(&model, &x0, &inputs, t).map_err(CliError::from)?;
        if trajectory.states().abs().max() <= state_bound {
            break (model, trajectory);
        }
    };

    if let Some(snr_db) = spec.snr_db {
        let states = trajectory.states();
        let mean = states.iter().sum::<f64>() / (states.len() as f64);
        let signal_var = states.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (states.len() as f64);
        let noise_var = signal_var / 10f64.powf(snr_db / 10.0);
        let normal = Normal::new(0.0, noise_var.sqrt())
            .map_err(|e| CliError::Usage(format!("invalid snr: {e}")))?;
        let noisy = DMatrix::from_fn(t, n, |i, j| states[(i, j)] + normal.sample(&mut rng));
        trajectory = Trajectory::new(noisy, trajectory.inputs().clone(), 0).map_err(CliError::from)?;
    }

    Ok((model, trajectory))
}
