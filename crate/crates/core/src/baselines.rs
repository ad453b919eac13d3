//! Least-squares baselines sharing the VMP regressor path.
//!
//! [`RlsState`] is an exponentially weighted recursive least-squares filter
//! that runs online with the same predict-then-update ordering as the VMP
//! estimator. [`ils_fit`] is the offline extended least-squares scheme: fit
//! with zero error regressors, then repeatedly refit using the residuals of
//! the previous fit as the error history.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, RegressorBuffer};
use crate::predict::DivergenceRule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlsSettings {
    pub forgetting: f64,
    /// Initial inverse correlation is `delta · I`.
    pub delta: f64,
}

impl Default for RlsSettings {
    fn default() -> Self {
        Self { forgetting: 1.0, delta: 1e4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    spec: Arc<BasisSpec>,
    weights: DVector<f64>,
    inverse_correlation: DMatrix<f64>,
    forgetting: f64,
    buffer: RegressorBuffer,
    last_prediction: f64,
    diverged: bool,
}

impl RlsState {
    pub fn new(spec: Arc<BasisSpec>, settings: RlsSettings) -> Result<Self> {
        if !(settings.forgetting > 0.0 && settings.forgetting <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "forgetting factor must lie in (0, 1], got {}",
                settings.forgetting
            )));
        }
        if !(settings.delta > 0.0 && settings.delta.is_finite()) {
            return Err(Error::InvalidArgument("RLS delta must be positive".into()));
        }
        let d = spec.dim();
        Ok(Self {
            weights: DVector::zeros(d),
            inverse_correlation: DMatrix::identity(d, d) * settings.delta,
            forgetting: settings.forgetting,
            buffer: RegressorBuffer::new(spec.config()),
            spec,
            last_prediction: 0.0,
            diverged: false,
        })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn spec(&self) -> &Arc<BasisSpec> {
        &self.spec
    }

    pub fn inverse_correlation(&self) -> &DMatrix<f64> {
        &self.inverse_correlation
    }

    pub fn last_prediction(&self) -> f64 {
        self.last_prediction
    }

    /// Set once an update produced non-finite values; later steps are ignored.
    pub fn diverged(&self) -> bool {
        self.diverged
    }

    /// One RLS update on `(u, y)`; returns the a-priori prediction `wᵀφ`.
    pub fn step(&mut self, u: f64, y: f64) -> Result<f64> {
        if !u.is_finite() || !y.is_finite() {
            return Err(Error::NonFiniteSignal(format!("observation (u={u}, y={y})")));
        }
        if self.diverged {
            return Ok(self.last_prediction);
        }
        let phi = match self.spec.expand(u, &self.buffer) {
            Ok(phi) => phi,
            Err(Error::NonFiniteSignal(_)) => {
                self.diverged = true;
                return Ok(self.last_prediction);
            }
            Err(e) => return Err(e),
        };
        let prediction = self.weights.dot(&phi);
        let p_phi = &self.inverse_correlation * &phi;
        let gain = &p_phi / (self.forgetting + phi.dot(&p_phi));
        let weights = &self.weights + &gain * (y - prediction);
        let mut p = (&self.inverse_correlation - &gain * p_phi.transpose()) / self.forgetting;
        p = (&p + p.transpose()) * 0.5;
        let error = y - prediction;
        let finite = prediction.is_finite()
            && weights.iter().all(|v| v.is_finite())
            && p.iter().all(|v| v.is_finite());
        let mut buffer = self.buffer.clone();
        if !finite || buffer.push(u, y, error).is_err() {
            self.diverged = true;
            return Ok(self.last_prediction);
        }
        self.weights = weights;
        self.inverse_correlation = p;
        self.buffer = buffer;
        self.last_prediction = prediction;
        Ok(prediction)
    }
}

/// `wᵀφ(u_next, buffer)`.
pub fn predict_point(weights: &DVector<f64>, spec: &BasisSpec, buffer: &RegressorBuffer, u_next: f64) -> Result<f64> {
    if weights.len() != spec.dim() {
        return Err(Error::DimensionMismatch("weights do not match basis".into()));
    }
    Ok(weights.dot(&spec.expand(u_next, buffer)?))
}

/// Point-estimate weights together with the basis they index, for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedWeights {
    pub estimator: String,
    pub config: crate::basis::NarmaxConfig,
    pub exponents: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
}

impl FittedWeights {
    pub fn new(estimator: &str, spec: &BasisSpec, weights: &DVector<f64>) -> Self {
        Self {
            estimator: estimator.to_string(),
            config: *spec.config(),
            exponents: spec.exponents().to_vec(),
            weights: weights.iter().copied().collect(),
        }
    }
}

/// Minimum-norm least-squares solution and the numerical rank used.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub solution: DVector<f64>,
    pub rank: usize,
}

/// Minimum-norm solution of `min ‖A x - b‖` via the SVD.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LeastSquares> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch("design matrix and target differ in rows".into()));
    }
    if a.ncols() == 0 {
        return Ok(LeastSquares { solution: DVector::zeros(0), rank: 0 });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSignal("least-squares input".into()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let solution = svd.solve(b, eps).map_err(|e| Error::Conditioning(e.to_string()))?;
    Ok(LeastSquares { solution, rank })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlsSettings {
    pub n_refinements: usize,
    /// Refinement stops once the max-abs weight change falls below this.
    pub weight_tolerance: f64,
}

impl Default for IlsSettings {
    fn default() -> Self {
        Self { n_refinements: 10, weight_tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlsModel {
    pub spec: Arc<BasisSpec>,
    pub weights: DVector<f64>,
    /// Refinements actually performed after the initial fit.
    pub n_refinements: usize,
    /// RMS residual of every fit, initial fit first.
    pub residual_history: Vec<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
    pub diverged: bool,
}

/// Builds the regressor matrix with the given error sequence as `e`-history.
fn design_matrix(spec: &BasisSpec, inputs: &[f64], outputs: &[f64], errors: &[f64]) -> Result<DMatrix<f64>> {
    let mut buffer = RegressorBuffer::new(spec.config());
    let mut rows = DMatrix::zeros(inputs.len(), spec.dim());
    for k in 0..inputs.len() {
        let phi = spec.expand(inputs[k], &buffer)?;
        rows.set_row(k, &phi.transpose());
        buffer.push(inputs[k], outputs[k], errors[k])?;
    }
    Ok(rows)
}

/// Offline iterative least squares.
pub fn ils_fit(inputs: &[f64], outputs: &[f64], spec: Arc<BasisSpec>, settings: IlsSettings) -> Result<IlsModel> {
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch("inputs and outputs differ in length".into()));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("ILS needs at least one sample".into()));
    }
    let rule = DivergenceRule::from_training_outputs(outputs);
    let y = DVector::from_column_slice(outputs);
    let mut errors = vec![0.0; inputs.len()];
    let mut phi = design_matrix(&spec, inputs, outputs, &errors)?;
    let mut fit = least_squares(&phi, &y)?;
    let mut model = IlsModel {
        weights: fit.solution.clone(),
        n_refinements: 0,
        residual_history: Vec::new(),
        rank: fit.rank,
        rank_deficient: fit.rank < spec.dim(),
        diverged: false,
        spec,
    };
    loop {
        let residuals = &y - &phi * &fit.solution;
        let rms = (residuals.norm_squared() / residuals.len() as f64).sqrt();
        model.residual_history.push(rms);
        if residuals.iter().any(|&r| rule.is_diverged(r)) {
            model.diverged = true;
            break;
        }
        if model.n_refinements == settings.n_refinements {
            break;
        }
        errors.copy_from_slice(residuals.as_slice());
        phi = match design_matrix(&model.spec, inputs, outputs, &errors) {
            Ok(phi) => phi,
            Err(Error::NonFiniteSignal(_)) => {
                model.diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let next = least_squares(&phi, &y)?;
        let change = (&next.solution - &fit.solution).amax();
        fit = next;
        model.weights = fit.solution.clone();
        model.rank = fit.rank;
        model.rank_deficient = fit.rank < model.spec.dim();
        model.n_refinements += 1;
        if change < settings.weight_tolerance {
            let residuals = &y - &phi * &fit.solution;
            model.residual_history.push((residuals.norm_squared() / residuals.len() as f64).sqrt());
            break;
        }
    }
    Ok(model)
}

/// Regressor matrix with zero error history, as used by the initial ILS fit.
pub fn regressor_matrix(spec: &BasisSpec, inputs: &[f64], outputs: &[f64]) -> Result<DMatrix<f64>> {
    if inputs.len() != outputs.len() {
        return Err(Error::DimensionMismatch("inputs and outputs differ in length".into()));
    }
    design_matrix(spec, inputs, outputs, &vec![0.0; inputs.len()])
}
