//! Posterior predictive, one-step prediction runs and free-run simulation.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSpec, RegressorBuffer};
use crate::beliefs::{GammaBelief, GaussianBelief};
use crate::vmp::{EstimatorState, FreeEnergyTrace, VmpSettings};
use crate::{Error, Result};

/// Gaussian approximation of the one-step-ahead posterior predictive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
}

/// Mode of the predictive, which is its mean.
pub fn map_prediction(p: &PredictiveDistribution) -> f64 {
    p.mean
}

/// Coefficient-uncertainty term `φᵀΛ⁻¹φ`.
pub fn parameter_variance(theta: &GaussianBelief, phi: &DVector<f64>) -> Result<f64> {
    if phi.len() != theta.dim() {
        return Err(Error::DimensionMismatch("phi does not match theta".into()));
    }
    let cov = theta.covariance()?;
    Ok(phi.dot(&(&cov * phi)))
}

/// Noise term `β/α`, the reciprocal of the expected precision.
pub fn noise_variance(tau: &GammaBelief) -> f64 {
    tau.rate() / tau.shape()
}

/// Predictive for `y_{k+1}` given the next input and the current buffer.
pub fn posterior_predictive(state: &EstimatorState, u_next: f64) -> Result<PredictiveDistribution> {
    let phi = state.spec().expand(u_next, state.buffer())?;
    let m = state.theta().moments()?;
    Ok(PredictiveDistribution {
        mean: m.mean.dot(&phi),
        variance: phi.dot(&(&m.covariance * &phi)) + noise_variance(state.tau()),
    })
}

/// Anything that maps a regressor to a predictive distribution with frozen parameters.
pub trait Predictor {
    fn spec(&self) -> &BasisSpec;
    fn predict(&self, phi: &DVector<f64>) -> PredictiveDistribution;
}

/// VMP posterior with parameters fixed at their final estimates.
#[derive(Debug, Clone)]
pub struct FrozenPosterior<'a> {
    spec: &'a BasisSpec,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    noise_variance: f64,
}

impl<'a> FrozenPosterior<'a> {
    pub fn new(state: &'a EstimatorState) -> Result<Self> {
        let m = state.theta().moments()?;
        Ok(Self {
            spec: state.spec(),
            mean: m.mean,
            covariance: m.covariance,
            noise_variance: noise_variance(state.tau()),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

impl Predictor for FrozenPosterior<'_> {
    fn spec(&self) -> &BasisSpec {
        self.spec
    }

    fn predict(&self, phi: &DVector<f64>) -> PredictiveDistribution {
        PredictiveDistribution {
            mean: self.mean.dot(phi),
            variance: phi.dot(&(&self.covariance * phi)) + self.noise_variance,
        }
    }
}

/// Point estimate `wᵀφ` with a zero-variance predictive.
#[derive(Debug, Clone)]
pub struct PointModel<'a> {
    spec: &'a BasisSpec,
    weights: &'a DVector<f64>,
}

impl<'a> PointModel<'a> {
    pub fn new(spec: &'a BasisSpec, weights: &'a DVector<f64>) -> Result<Self> {
        if weights.len() != spec.dim() {
            return Err(Error::DimensionMismatch("weights do not match basis".into()));
        }
        Ok(Self { spec, weights })
    }
}

impl Predictor for PointModel<'_> {
    fn spec(&self) -> &BasisSpec {
        self.spec
    }

    fn predict(&self, phi: &DVector<f64>) -> PredictiveDistribution {
        PredictiveDistribution { mean: self.weights.dot(phi), variance: 0.0 }
    }
}

/// Flags a prediction run as diverged once `|ŷ|` exceeds a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRule {
    pub threshold: f64,
}

impl DivergenceRule {
    pub const FACTOR: f64 = 1e4;

    /// `1e4 × max(std(outputs), 1)`.
    pub fn from_training_outputs(outputs: &[f64]) -> Self {
        let n = outputs.len() as f64;
        let std = if outputs.is_empty() {
            0.0
        } else {
            let mean = outputs.iter().sum::<f64>() / n;
            (outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        Self { threshold: Self::FACTOR * if std.is_finite() { std.max(1.0) } else { 1.0 } }
    }

    pub fn is_diverged(&self, y_hat: f64) -> bool {
        !y_hat.is_finite() || y_hat.abs() > self.threshold
    }
}

impl Default for DivergenceRule {
    fn default() -> Self {
        Self { threshold: Self::FACTOR }
    }
}

/// Output of a frozen-parameter prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub predictions: Vec<f64>,
    pub variances: Vec<f64>,
    pub diverged: bool,
    pub diverged_at: Option<usize>,
}

impl SimulationResult {
    fn with_capacity(n: usize) -> Self {
        Self { predictions: Vec::with_capacity(n), variances: Vec::with_capacity(n), diverged: false, diverged_at: None }
    }

    fn diverge(&mut self, at: usize) {
        self.diverged = true;
        self.diverged_at = Some(at);
    }
}

/// Free-run simulation: the output history holds previous MAP predictions and
/// the error history stays zero.
pub fn simulate<P: Predictor>(model: &P, inputs: &[f64], rule: DivergenceRule) -> SimulationResult {
    let mut buffer = RegressorBuffer::new(model.spec().config());
    let mut out = SimulationResult::with_capacity(inputs.len());
    for (i, &u) in inputs.iter().enumerate() {
        let Ok(phi) = model.spec().expand(u, &buffer) else {
            out.diverge(i);
            break;
        };
        let p = model.predict(&phi);
        let y_hat = map_prediction(&p);
        if rule.is_diverged(y_hat) || buffer.push(u, y_hat, 0.0).is_err() {
            out.diverge(i);
            break;
        }
        out.predictions.push(y_hat);
        out.variances.push(p.variance);
    }
    out
}

/// [`simulate`] from a trained estimator; the state itself is not touched.
pub fn simulate_state(state: &EstimatorState, inputs: &[f64], rule: DivergenceRule) -> Result<SimulationResult> {
    Ok(simulate(&FrozenPosterior::new(state)?, inputs, rule))
}

/// Frozen-parameter one-step-ahead predictions on measured data: the output
/// history holds measured outputs and the error history holds `y - ŷ`.
pub fn one_step_frozen<P: Predictor>(
    model: &P,
    inputs: &[f64],
    outputs: &[f64],
    rule: DivergenceRule,
) -> Result<SimulationResult> {
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch("inputs and outputs differ in length".into()));
    }
    let mut buffer = RegressorBuffer::new(model.spec().config());
    let mut out = SimulationResult::with_capacity(inputs.len());
    for (i, (&u, &y)) in inputs.iter().zip(outputs).enumerate() {
        let Ok(phi) = model.spec().expand(u, &buffer) else {
            out.diverge(i);
            break;
        };
        let p = model.predict(&phi);
        let y_hat = map_prediction(&p);
        if rule.is_diverged(y_hat) || buffer.push(u, y, y - y_hat).is_err() {
            out.diverge(i);
            break;
        }
        out.predictions.push(y_hat);
        out.variances.push(p.variance);
    }
    Ok(out)
}

/// Result of an online identification run.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    /// `ŷ_k` for each sample, made before `y_k` was seen.
    pub predictions: Vec<f64>,
    pub free_energy: Vec<FreeEnergyTrace>,
}

/// Online identification: predict each `y_k` from the posterior at `k-1`,
/// then update on `(u_k, y_k)`.
pub fn one_step_sequence(
    state: &mut EstimatorState,
    inputs: &[f64],
    outputs: &[f64],
    settings: &VmpSettings,
) -> Result<OnlineRun> {
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch("inputs and outputs differ in length".into()));
    }
    let mut run = OnlineRun { predictions: Vec::with_capacity(inputs.len()), free_energy: Vec::with_capacity(inputs.len()) };
    for (&u, &y) in inputs.iter().zip(outputs) {
        let report = state.step(u, y, settings)?;
        run.predictions.push(report.prediction);
        run.free_energy.push(report.free_energy);
    }
    Ok(run)
}
