//! Benchmark signals and systems.
//!
//! All randomness comes from [`ChaCha8Rng`]. A seed selects the key; the
//! harness derives one stream per realization with [`substream`], so a given
//! `(seed, stream)` pair reproduces on every platform regardless of the order
//! in which realizations are executed.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_monomials, BasisSpec, NarmaxConfig, RegressorBuffer};
use crate::{Error, Result};

/// Output magnitude beyond which a simulated system is treated as unstable.
pub const UNSTABLE_MAGNITUDE: f64 = 1e6;

/// Generator keyed by `seed`, positioned on stream `stream`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultisineSpec {
    pub n_frequencies: usize,
    pub f_low: f64,
    pub f_high: f64,
    pub sample_rate: f64,
    /// Target standard deviation of the generated signal.
    pub amplitude_norm: f64,
    pub seed: u64,
}

impl Default for MultisineSpec {
    fn default() -> Self {
        Self { n_frequencies: 100, f_low: 1.0, f_high: 100.0, sample_rate: 1000.0, amplitude_norm: 1.0, seed: 0 }
    }
}

impl MultisineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_frequencies == 0 {
            return Err(Error::InvalidArgument("multisine needs at least one frequency".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if !(self.f_low >= 0.0 && self.f_low <= self.f_high && self.f_high <= self.sample_rate / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= f_low <= f_high <= fs/2, got [{}, {}] at fs {}",
                self.f_low, self.f_high, self.sample_rate
            )));
        }
        if !(self.amplitude_norm >= 0.0 && self.amplitude_norm.is_finite()) {
            return Err(Error::InvalidArgument("amplitude_norm must be non-negative".into()));
        }
        Ok(())
    }

    /// Equally spaced grid on `[f_low, f_high]`; a single tone sits at `f_low`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_frequencies;
        if n == 1 {
            return vec![self.f_low];
        }
        let step = (self.f_high - self.f_low) / (n - 1) as f64;
        (0..n).map(|i| self.f_low + step * i as f64).collect()
    }
}

/// Random-phase multisine using the spec's own seed.
pub fn generate_multisine(spec: &MultisineSpec, length: usize) -> Result<Vec<f64>> {
    generate_multisine_rng(spec, length, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Random-phase multisine with phases drawn from `rng`.
pub fn generate_multisine_rng<R: Rng>(spec: &MultisineSpec, length: usize, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let phases: Vec<f64> = (0..spec.n_frequencies).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    multisine_with_phases(spec, &phases, length)
}

/// Multisine with explicit phases, rescaled to `amplitude_norm` standard
/// deviation. A constant signal is returned unscaled.
pub fn multisine_with_phases(spec: &MultisineSpec, phases: &[f64], length: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if phases.len() != spec.n_frequencies {
        return Err(Error::DimensionMismatch(format!(
            "{} phases for {} frequencies",
            phases.len(),
            spec.n_frequencies
        )));
    }
    let freqs = spec.frequencies();
    let mut signal: Vec<f64> = (0..length)
        .map(|t| {
            let t = t as f64 / spec.sample_rate;
            freqs.iter().zip(phases).map(|(f, psi)| (2.0 * PI * f * t + psi).sin()).sum()
        })
        .collect();
    let sd = std_dev(&signal);
    if sd > 0.0 {
        let scale = spec.amplitude_norm / sd;
        signal.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(signal)
}

/// Population standard deviation; 0 for empty input.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// First-order Butterworth low-pass via the prewarped bilinear transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFilter {
    pub b0: f64,
    pub b1: f64,
    /// Denominator coefficient of `z⁻¹`; the output recursion uses `-a1`.
    pub a1: f64,
}

pub fn butterworth_first_order(cutoff: f64, sample_rate: f64) -> Result<FirstOrderFilter> {
    if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must lie in (0, fs/2)")));
    }
    let k = (PI * cutoff / sample_rate).tan();
    Ok(FirstOrderFilter { b0: k / (1.0 + k), b1: k / (1.0 + k), a1: (k - 1.0) / (k + 1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemOptions {
    /// Remaining coefficients are drawn from `U(-h, h)`.
    pub coefficient_half_width: f64,
    pub cutoff: f64,
    pub sample_rate: f64,
    pub error_coefficient: f64,
    pub noise_std: f64,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self { coefficient_half_width: 0.005, cutoff: 100.0, sample_rate: 1000.0, error_coefficient: 0.1, noise_std: 0.02 }
    }
}

impl SystemOptions {
    /// The wider `U(-0.01, 0.01)` reading of the coefficient range.
    pub fn wide() -> Self {
        Self { coefficient_half_width: 0.01, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coefficient_half_width >= 0.0 && self.coefficient_half_width.is_finite()) {
            return Err(Error::InvalidArgument("coefficient_half_width must be non-negative".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument("noise_std must be non-negative".into()));
        }
        if !self.error_coefficient.is_finite() {
            return Err(Error::InvalidArgument("error_coefficient must be finite".into()));
        }
        butterworth_first_order(self.cutoff, self.sample_rate).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub config: NarmaxConfig,
    pub coefficients: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SystemSpec {
    pub fn basis(&self) -> Result<BasisSpec> {
        let spec = enumerate_monomials(&self.config)?;
        if spec.dim() != self.coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a basis of {}",
                self.coefficients.len(),
                spec.dim()
            )));
        }
        Ok(spec)
    }
}

/// Benchmark system with default options.
pub fn generate_system(seed: u64) -> Result<SystemSpec> {
    generate_system_rng(&SystemOptions::default(), seed, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Benchmark system with coefficients drawn from `rng`; `seed` is recorded.
pub fn generate_system_rng<R: Rng>(options: &SystemOptions, seed: u64, rng: &mut R) -> Result<SystemSpec> {
    options.validate()?;
    let config = NarmaxConfig::benchmark();
    let spec = enumerate_monomials(&config)?;
    let h = options.coefficient_half_width;
    let mut coefficients: Vec<f64> = (0..spec.dim()).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * h).collect();
    let filter = butterworth_first_order(options.cutoff, options.sample_rate)?;
    let fixed = [
        (spec.input_variable(0), filter.b0),
        (spec.input_variable(1), filter.b1),
        (spec.output_variable(1), -filter.a1),
        (spec.error_variable(1), options.error_coefficient),
    ];
    for (var, value) in fixed {
        let idx = spec.linear_term(var).expect("benchmark basis has every linear term");
        coefficients[idx] = value;
    }
    Ok(SystemSpec { config, coefficients, noise_std: options.noise_std, seed })
}

/// Noise `N(0, noise_std²)` drawn from a generator seeded with `seed`.
pub fn simulate_system(sys: &SystemSpec, inputs: &[f64], seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noises: Vec<f64> = (0..inputs.len()).map(|_| sys.noise_std * rng.sample::<f64, _>(StandardNormal)).collect();
    let outputs = simulate_system_with_noise(sys, inputs, &noises)?;
    Ok((outputs, noises))
}

/// Runs the system on given noise. The error history holds the true noise.
pub fn simulate_system_with_noise(sys: &SystemSpec, inputs: &[f64], noises: &[f64]) -> Result<Vec<f64>> {
    if inputs.len() != noises.len() {
        return Err(Error::DimensionMismatch("inputs and noises differ in length".into()));
    }
    let spec = sys.basis()?;
    let theta = DVector::from_column_slice(&sys.coefficients);
    let mut buffer = RegressorBuffer::new(&sys.config);
    let mut outputs = Vec::with_capacity(inputs.len());
    for (step, (&u, &e)) in inputs.iter().zip(noises).enumerate() {
        let phi = spec.expand(u, &buffer).map_err(|_| Error::UnstableSystem { step })?;
        let y = theta.dot(&phi) + e;
        if !y.is_finite() || y.abs() > UNSTABLE_MAGNITUDE {
            return Err(Error::UnstableSystem { step });
        }
        buffer.push(u, y, e)?;
        outputs.push(y);
    }
    Ok(outputs)
}

/// Standard-normal draws, scaled later by the realization's noise level.
pub fn standard_normal<R: Rng>(rng: &mut R, length: usize) -> Vec<f64> {
    (0..length).map(|_| rng.sample(StandardNormal)).collect()
}
