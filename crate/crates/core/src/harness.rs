//! Experiment orchestration: sample-size and noise-level sweeps over
//! randomly drawn benchmark systems, with VMP, RLS and ILS trained on the
//! same data and scored on a common validation signal.
//!
//! Realization `r` draws everything from `substream(base_seed, stream)` with
//! `stream = r << 12 | attempt << 4 | purpose`, so records do not depend on
//! the number of worker threads. In a sample sweep every training length uses
//! a prefix of the same training signal; in a noise sweep every level reuses
//! the same system, input and standard-normal draws scaled by the level.

use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ils_fit, IlsSettings, RlsSettings, RlsState};
use crate::basis::{enumerate_monomials, BasisSpec, NarmaxConfig};
use crate::datagen::{
    generate_multisine_rng, generate_system_rng, simulate_system_with_noise, standard_normal, substream,
    MultisineSpec, SystemOptions, SystemSpec,
};
use crate::predict::{one_step_frozen, simulate, DivergenceRule, FrozenPosterior, PointModel, Predictor};
use crate::vmp::{EstimatorState, Priors, VmpSettings};
use crate::{Error, Result};

/// Draws per realization before giving up on finding a stable system.
pub const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    SampleSweep,
    NoiseSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Vmp,
    Rls,
    Ils,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Vmp => "vmp",
            EstimatorKind::Rls => "rls",
            EstimatorKind::Ils => "ils",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vmp" => Some(EstimatorKind::Vmp),
            "rls" => Some(EstimatorKind::Rls),
            "ils" => Some(EstimatorKind::Ils),
            _ => None,
        }
    }
}

/// Isotropic VMP priors `N(mu0·1, (lambda0·I)⁻¹)`, `Γ(alpha0, beta0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub mu0: f64,
    pub lambda0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { mu0: 0.0, lambda0: 1.0, alpha0: 10.0, beta0: 0.1 }
    }
}

impl PriorSpec {
    pub fn priors(&self, dim: usize) -> Result<Priors> {
        Priors::isotropic(dim, self.mu0, self.lambda0, self.alpha0, self.beta0)
    }
}

fn default_lengths() -> Vec<usize> {
    vec![128]
}

fn default_noise() -> Vec<f64> {
    vec![0.02]
}

fn default_half_width() -> f64 {
    SystemOptions::default().coefficient_half_width
}

fn default_input_std() -> f64 {
    MultisineSpec::default().amplitude_norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub mode: SweepMode,
    /// Swept in a sample sweep; must hold a single length in a noise sweep.
    #[serde(default = "default_lengths")]
    pub training_lengths: Vec<usize>,
    /// Swept in a noise sweep; must hold a single level in a sample sweep.
    #[serde(default = "default_noise")]
    pub noise_stds: Vec<f64>,
    pub n_realizations: usize,
    pub validation_length: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub vmp_priors: PriorSpec,
    #[serde(default)]
    pub vmp_settings: VmpSettings,
    #[serde(default)]
    pub rls: RlsSettings,
    #[serde(default)]
    pub ils: IlsSettings,
    #[serde(default = "default_half_width")]
    pub coefficient_half_width: f64,
    #[serde(default = "default_input_std")]
    pub input_std: f64,
}

impl ExperimentPlan {
    /// Sample-size sweep at desk scale.
    pub fn experiment1() -> Self {
        Self {
            mode: SweepMode::SampleSweep,
            training_lengths: vec![16, 32, 64, 128, 256, 512, 1024],
            noise_stds: vec![0.02],
            n_realizations: 50,
            validation_length: 1000,
            estimators: vec![EstimatorKind::Vmp, EstimatorKind::Rls, EstimatorKind::Ils],
            base_seed: 0,
            vmp_priors: PriorSpec::default(),
            vmp_settings: VmpSettings::default(),
            rls: RlsSettings::default(),
            ils: IlsSettings::default(),
            coefficient_half_width: default_half_width(),
            input_std: default_input_std(),
        }
    }

    /// Noise-level sweep at a fixed training length of 128.
    pub fn experiment2() -> Self {
        Self {
            mode: SweepMode::NoiseSweep,
            training_lengths: vec![128],
            noise_stds: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            ..Self::experiment1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        let (swept, fixed) = match self.mode {
            SweepMode::SampleSweep => (self.training_lengths.len(), self.noise_stds.len()),
            SweepMode::NoiseSweep => (self.noise_stds.len(), self.training_lengths.len()),
        };
        if swept == 0 {
            return bad("sweep axis is empty");
        }
        if fixed != 1 {
            return bad("the axis that is not swept must hold exactly one value");
        }
        if self.training_lengths.iter().any(|&n| n == 0) {
            return bad("training lengths must be positive");
        }
        if self.noise_stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise standard deviations must be finite and non-negative");
        }
        if self.n_realizations == 0 {
            return bad("n_realizations must be positive");
        }
        if self.validation_length == 0 {
            return bad("validation_length must be at least 1");
        }
        if self.estimators.is_empty() {
            return bad("no estimators selected");
        }
        if self.estimators.iter().collect::<HashSet<_>>().len() != self.estimators.len() {
            return bad("estimators must be unique");
        }
        if self.n_realizations as u64 >= 1 << 52 {
            return bad("too many realizations");
        }
        self.vmp_priors.priors(1)?;
        self.vmp_settings.validate()?;
        let sys = SystemOptions { coefficient_half_width: self.coefficient_half_width, ..SystemOptions::default() };
        sys.validate()?;
        MultisineSpec { amplitude_norm: self.input_std, ..MultisineSpec::default() }.validate()?;
        Ok(())
    }

    /// Values along the swept axis, in plan order.
    pub fn sweep_values(&self) -> Vec<f64> {
        match self.mode {
            SweepMode::SampleSweep => self.training_lengths.iter().map(|&n| n as f64).collect(),
            SweepMode::NoiseSweep => self.noise_stds.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sweep_value: f64,
    pub estimator: EstimatorKind,
    pub realization: usize,
    /// Absent for failed runs.
    pub rms_simulation: Option<f64>,
    pub rms_prediction: Option<f64>,
    pub failed: bool,
}

/// A system draw discarded because its output blew up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub realization: usize,
    pub attempt: u64,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub records: Vec<RunRecord>,
    pub rejections: Vec<Rejection>,
}

/// `sqrt(mean(e²))`.
pub fn rms(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("rms of an empty vector".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

fn rms_between(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    let errors: Vec<f64> = measured.iter().zip(predicted).map(|(y, p)| y - p).collect();
    rms(&errors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub estimator: EstimatorKind,
    pub n_runs: usize,
    pub n_failed: usize,
    pub failure_proportion: f64,
    pub mean_rms_simulation: Option<f64>,
    pub sem_rms_simulation: Option<f64>,
    pub mean_rms_prediction: Option<f64>,
    pub sem_rms_prediction: Option<f64>,
}

/// Mean and standard error of the mean; a single value has SEM 0.
pub fn mean_sem(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

/// One row per (sweep value, estimator) in order of first appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(u64, EstimatorKind)> = Vec::new();
    for r in records {
        let key = (r.sweep_value.to_bits(), r.estimator);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(bits, estimator)| {
            let cell: Vec<&RunRecord> =
                records.iter().filter(|r| r.sweep_value.to_bits() == bits && r.estimator == estimator).collect();
            let ok: Vec<&&RunRecord> = cell.iter().filter(|r| !r.failed).collect();
            let sim: Vec<f64> = ok.iter().filter_map(|r| r.rms_simulation).collect();
            let pred: Vec<f64> = ok.iter().filter_map(|r| r.rms_prediction).collect();
            let n_failed = cell.len() - ok.len();
            let sim = mean_sem(&sim);
            let pred = mean_sem(&pred);
            AggregateRow {
                sweep_value: f64::from_bits(bits),
                estimator,
                n_runs: cell.len(),
                n_failed,
                failure_proportion: n_failed as f64 / cell.len() as f64,
                mean_rms_simulation: sim.map(|s| s.0),
                sem_rms_simulation: sim.map(|s| s.1),
                mean_rms_prediction: pred.map(|s| s.0),
                sem_rms_prediction: pred.map(|s| s.1),
            }
        })
        .collect()
}

const PURPOSE_SYSTEM: u64 = 0;
const PURPOSE_TRAIN_INPUT: u64 = 1;
const PURPOSE_TRAIN_NOISE: u64 = 2;
const PURPOSE_VALIDATION_INPUT: u64 = 3;
const PURPOSE_VALIDATION_NOISE: u64 = 4;

fn stream_id(realization: usize, attempt: u64, purpose: u64) -> u64 {
    ((realization as u64) << 12) | (attempt << 4) | purpose
}

/// Training and validation data of one realization at one noise level.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train_u: Vec<f64>,
    pub train_y: Vec<f64>,
    pub val_u: Vec<f64>,
    pub val_y: Vec<f64>,
}

/// The system and datasets of one realization, one dataset per noise level.
#[derive(Debug, Clone)]
pub struct Realization {
    pub system: SystemSpec,
    pub datasets: Vec<Dataset>,
    pub rejections: Vec<Rejection>,
}

/// Draws a stable system and its signals for realization `index`.
pub fn draw_realization(plan: &ExperimentPlan, index: usize) -> Result<Realization> {
    let train_len = plan.training_lengths.iter().copied().max().unwrap_or(0);
    let options = SystemOptions { coefficient_half_width: plan.coefficient_half_width, ..SystemOptions::default() };
    let input = MultisineSpec { amplitude_norm: plan.input_std, seed: plan.base_seed, ..MultisineSpec::default() };
    let mut rejections = Vec::new();
    'attempts: for attempt in 0..MAX_ATTEMPTS {
        let rng = |purpose| substream(plan.base_seed, stream_id(index, attempt, purpose));
        let system = generate_system_rng(&options, plan.base_seed, &mut rng(PURPOSE_SYSTEM))?;
        let train_u = generate_multisine_rng(&input, train_len, &mut rng(PURPOSE_TRAIN_INPUT))?;
        let train_z = standard_normal(&mut rng(PURPOSE_TRAIN_NOISE), train_len);
        let val_u = generate_multisine_rng(&input, plan.validation_length, &mut rng(PURPOSE_VALIDATION_INPUT))?;
        let val_z = standard_normal(&mut rng(PURPOSE_VALIDATION_NOISE), plan.validation_length);
        let mut datasets = Vec::with_capacity(plan.noise_stds.len());
        for &sigma in &plan.noise_stds {
            let sys = SystemSpec { noise_std: sigma, ..system.clone() };
            let scaled = |z: &[f64]| z.iter().map(|v| v * sigma).collect::<Vec<_>>();
            let outputs = simulate_system_with_noise(&sys, &train_u, &scaled(&train_z))
                .and_then(|y| Ok((y, simulate_system_with_noise(&sys, &val_u, &scaled(&val_z))?)));
            match outputs {
                Ok((train_y, val_y)) => {
                    datasets.push(Dataset { train_u: train_u.clone(), train_y, val_u: val_u.clone(), val_y })
                }
                Err(Error::UnstableSystem { step }) => {
                    rejections.push(Rejection { realization: index, attempt, step });
                    continue 'attempts;
                }
                Err(e) => return Err(e),
            }
        }
        return Ok(Realization { system, datasets, rejections });
    }
    Err(Error::InvalidArgument(format!(
        "realization {index}: no stable system in {MAX_ATTEMPTS} attempts"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scores {
    rms_simulation: f64,
    rms_prediction: f64,
}

/// Validation scores, or `None` when either prediction mode diverged.
fn score<P: Predictor>(model: &P, data: &Dataset, rule: DivergenceRule) -> Result<Option<Scores>> {
    let sim = simulate(model, &data.val_u, rule);
    let one = one_step_frozen(model, &data.val_u, &data.val_y, rule)?;
    if sim.diverged || one.diverged {
        return Ok(None);
    }
    Ok(Some(Scores {
        rms_simulation: rms_between(&data.val_y, &sim.predictions)?,
        rms_prediction: rms_between(&data.val_y, &one.predictions)?,
    }))
}

/// Scores for every requested training length, in sorted-length order.
fn run_estimator(
    plan: &ExperimentPlan,
    kind: EstimatorKind,
    spec: &Arc<BasisSpec>,
    data: &Dataset,
    lengths: &[usize],
) -> Result<Vec<Option<Scores>>> {
    let rule_at = |n: usize| DivergenceRule::from_training_outputs(&data.train_y[..n]);
    let mut out = Vec::with_capacity(lengths.len());
    match kind {
        EstimatorKind::Vmp => {
            let mut state = EstimatorState::new(spec.clone(), plan.vmp_priors.priors(spec.dim())?)?;
            let mut seen = 0;
            for &n in lengths {
                let trained = (seen..n).try_for_each(|k| {
                    state.step(data.train_u[k], data.train_y[k], &plan.vmp_settings).map(|_| ())
                });
                seen = n;
                match trained.and_then(|_| FrozenPosterior::new(&state)) {
                    Ok(model) => out.push(score(&model, data, rule_at(n))?),
                    Err(e) if e.is_numerical() => break,
                    Err(e) => return Err(e),
                }
            }
        }
        EstimatorKind::Rls => {
            let mut state = RlsState::new(spec.clone(), plan.rls)?;
            let mut seen = 0;
            for &n in lengths {
                for k in seen..n {
                    state.step(data.train_u[k], data.train_y[k])?;
                }
                seen = n;
                if state.diverged() {
                    break;
                }
                out.push(score(&PointModel::new(spec, state.weights())?, data, rule_at(n))?);
            }
        }
        EstimatorKind::Ils => {
            for &n in lengths {
                let fit = ils_fit(&data.train_u[..n], &data.train_y[..n], spec.clone(), plan.ils);
                match fit {
                    Ok(model) if !model.diverged => {
                        out.push(score(&PointModel::new(spec, &model.weights)?, data, rule_at(n))?)
                    }
                    Ok(_) => out.push(None),
                    Err(e) if e.is_numerical() => out.push(None),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    // Lengths after an unrecoverable training failure count as failed.
    out.resize(lengths.len(), None);
    Ok(out)
}

/// Every record of one realization, tagged with the sweep position.
fn run_realization(plan: &ExperimentPlan, spec: &Arc<BasisSpec>, index: usize) -> Result<(Vec<(usize, usize, RunRecord)>, Vec<Rejection>)> {
    let realization = draw_realization(plan, index)?;
    let mut sorted: Vec<usize> = plan.training_lengths.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let mut records = Vec::new();
    for (noise_idx, data) in realization.datasets.iter().enumerate() {
        for (est_idx, &kind) in plan.estimators.iter().enumerate() {
            let scores = run_estimator(plan, kind, spec, data, &sorted)?;
            for (len_idx, &n) in plan.training_lengths.iter().enumerate() {
                let s = scores[sorted.binary_search(&n).expect("length is in the sorted set")];
                let (sweep_idx, sweep_value) = match plan.mode {
                    SweepMode::SampleSweep => (len_idx, n as f64),
                    SweepMode::NoiseSweep => (noise_idx, plan.noise_stds[noise_idx]),
                };
                records.push((
                    sweep_idx,
                    est_idx,
                    RunRecord {
                        sweep_value,
                        estimator: kind,
                        realization: index,
                        rms_simulation: s.map(|s| s.rms_simulation),
                        rms_prediction: s.map(|s| s.rms_prediction),
                        failed: s.is_none(),
                    },
                ));
            }
        }
    }
    Ok((records, realization.rejections))
}

/// Runs every realization on a pool of `jobs` threads (0 picks a default).
/// Records are ordered by sweep position, then realization, then estimator.
pub fn run_plan(plan: &ExperimentPlan, jobs: usize) -> Result<PlanOutcome> {
    plan.validate()?;
    let spec = Arc::new(enumerate_monomials(&NarmaxConfig::benchmark())?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let per_realization: Vec<_> = pool.install(|| {
        (0..plan.n_realizations).into_par_iter().map(|r| run_realization(plan, &spec, r)).collect::<Result<Vec<_>>>()
    })?;
    let mut tagged = Vec::new();
    let mut rejections = Vec::new();
    for (records, rejected) in per_realization {
        tagged.extend(records);
        rejections.extend(rejected);
    }
    tagged.sort_by_key(|(sweep_idx, est_idx, r)| (*sweep_idx, r.realization, *est_idx));
    Ok(PlanOutcome { records: tagged.into_iter().map(|(_, _, r)| r).collect(), rejections })
}
