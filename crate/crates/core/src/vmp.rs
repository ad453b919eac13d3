//! Recursive variational message passing for polynomial NARMAX models.
//!
//! Each observation runs a fixed coordinate-descent schedule over the two
//! mean-field factors. The coefficient factor combines the previous posterior
//! with the likelihood message `E[τ] φφᵀ`, and the precision factor combines
//! the previous Gamma with a shape-3/2 message whose rate is half the expected
//! squared residual. Both combinations always start from the snapshot of the
//! previous posterior so one sample is counted once.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_monomials, BasisSpec, NarmaxConfig, RegressorBuffer};
use crate::beliefs::{
    factor, gamma_kl, gamma_product, gaussian_kl_from_moments, gaussian_product, GammaBelief,
    GaussianBelief, GaussianMoments,
};
use crate::{Error, Result};

/// Lower bound on the rate of the precision message.
pub const RATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VmpSettings {
    pub n_iterations: usize,
    /// Stop iterating once the free energy changes by less than this.
    pub fe_tolerance: f64,
}

impl Default for VmpSettings {
    fn default() -> Self {
        Self { n_iterations: 10, fe_tolerance: 1e-8 }
    }
}

impl VmpSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::InvalidArgument("n_iterations must be at least 1".into()));
        }
        if !(self.fe_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("fe_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// Initial beliefs over the coefficients and the noise precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub theta: GaussianBelief,
    pub tau: GammaBelief,
}

impl Priors {
    /// `N(mu0·1, (lambda0·I)^-1)` and `Γ(alpha0, beta0)`.
    pub fn isotropic(dim: usize, mu0: f64, lambda0: f64, alpha0: f64, beta0: f64) -> Result<Self> {
        Ok(Self {
            theta: GaussianBelief::isotropic(dim, mu0, lambda0)?,
            tau: GammaBelief::new(alpha0, beta0)?,
        })
    }

    /// Zero-mean unit-precision coefficients, noise precision with mean 100 and variance 1000.
    pub fn weakly_informative(dim: usize) -> Self {
        Self::isotropic(dim, 0.0, 1.0, 10.0, 0.1).expect("constant priors are valid")
    }
}

/// Free-energy values after each coordinate-descent iteration of one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyTrace {
    pub values: Vec<f64>,
}

impl FreeEnergyTrace {
    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// What one processed observation produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// `ŷ_k`, the MAP prediction made from the posterior at `k-1`.
    pub prediction: f64,
    /// `y_k - ŷ_k`, pushed into the error history.
    pub error: f64,
    pub free_energy: FreeEnergyTrace,
}

/// Online estimator: coefficient and precision beliefs plus the delay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    theta: GaussianBelief,
    tau: GammaBelief,
    buffer: RegressorBuffer,
    spec: Arc<BasisSpec>,
    last_prediction: f64,
    step_index: u64,
}

impl EstimatorState {
    pub fn new(spec: Arc<BasisSpec>, priors: Priors) -> Result<Self> {
        if priors.theta.dim() != spec.dim() {
            return Err(Error::DimensionMismatch(format!(
                "prior has dimension {}, basis has {}",
                priors.theta.dim(),
                spec.dim()
            )));
        }
        if !priors.theta.is_positive_definite() {
            return Err(Error::DegenerateBelief("coefficient prior must be positive definite".into()));
        }
        Ok(Self {
            theta: priors.theta,
            tau: priors.tau,
            buffer: RegressorBuffer::new(spec.config()),
            spec,
            last_prediction: 0.0,
            step_index: 0,
        })
    }

    pub fn theta(&self) -> &GaussianBelief {
        &self.theta
    }

    pub fn tau(&self) -> &GammaBelief {
        &self.tau
    }

    pub fn buffer(&self) -> &RegressorBuffer {
        &self.buffer
    }

    pub fn spec(&self) -> &Arc<BasisSpec> {
        &self.spec
    }

    pub fn last_prediction(&self) -> f64 {
        self.last_prediction
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Processes one `(u_k, y_k)` pair. See [`vmp_step`].
    pub fn step(&mut self, u: f64, y: f64, settings: &VmpSettings) -> Result<StepReport> {
        vmp_step(self, u, y, settings)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step_index: self.step_index,
            theta: self.theta.clone(),
            tau: self.tau,
            buffer: self.buffer.clone(),
            last_prediction: self.last_prediction,
            config: *self.spec.config(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let spec = Arc::new(enumerate_monomials(&ck.config)?);
        if !ck.buffer.matches(&ck.config) {
            return Err(Error::DimensionMismatch("checkpoint buffer does not match config".into()));
        }
        if ck.theta.dim() != spec.dim() {
            return Err(Error::DimensionMismatch("checkpoint theta does not match config".into()));
        }
        if !ck.theta.is_positive_definite() {
            return Err(Error::DegenerateBelief("checkpoint theta is not positive definite".into()));
        }
        if !ck.last_prediction.is_finite() {
            return Err(Error::NonFiniteSignal("checkpoint last_prediction".into()));
        }
        Ok(Self {
            theta: ck.theta,
            tau: ck.tau,
            buffer: ck.buffer,
            spec,
            last_prediction: ck.last_prediction,
            step_index: ck.step_index,
        })
    }
}

/// Serialized estimator state for suspending and resuming an online run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub step_index: u64,
    pub theta: GaussianBelief,
    pub tau: GammaBelief,
    pub buffer: RegressorBuffer,
    pub last_prediction: f64,
    pub config: NarmaxConfig,
}

/// Likelihood message towards the coefficients: precision `E[τ] φφᵀ`,
/// precision-weighted mean `E[τ] y φ`.
pub fn message_theta(phi: &DVector<f64>, y: f64, tau: &GammaBelief) -> Result<GaussianBelief> {
    if !y.is_finite() || phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSignal("message_theta input".into()));
    }
    let e_tau = tau.mean();
    GaussianBelief::new(phi * phi.transpose() * e_tau, phi * (e_tau * y))
}

/// Likelihood message towards the precision: shape 3/2, rate
/// `½((y - μᵀφ)² + φᵀΛ⁻¹φ)`.
pub fn message_tau(phi: &DVector<f64>, y: f64, theta: &GaussianBelief) -> Result<GammaBelief> {
    if phi.len() != theta.dim() {
        return Err(Error::DimensionMismatch("phi does not match theta".into()));
    }
    message_tau_from(phi, y, &theta.moments()?)
}

fn message_tau_from(phi: &DVector<f64>, y: f64, m: &GaussianMoments) -> Result<GammaBelief> {
    GammaBelief::new(1.5, (0.5 * expected_sq_residual(phi, y, m)).max(RATE_FLOOR))
}

/// `E_q[(y - θᵀφ)²] = (y - μᵀφ)² + φᵀΣφ`.
fn expected_sq_residual(phi: &DVector<f64>, y: f64, m: &GaussianMoments) -> f64 {
    let r = y - m.mean.dot(phi);
    r * r + phi.dot(&(&m.covariance * phi))
}

/// `E_q[ln N(y | θᵀφ, τ⁻¹)]` under the mean-field factors.
fn expected_log_likelihood(phi: &DVector<f64>, y: f64, m: &GaussianMoments, tau: &GammaBelief) -> f64 {
    0.5 * (tau.expected_log() - (2.0 * PI).ln()) - 0.5 * tau.mean() * expected_sq_residual(phi, y, m)
}

/// Variational free energy of one step: complexity minus accuracy.
pub fn free_energy(
    q_theta: &GaussianBelief,
    q_tau: &GammaBelief,
    prior_theta: &GaussianBelief,
    prior_tau: &GammaBelief,
    phi: &DVector<f64>,
    y: f64,
) -> Result<f64> {
    if q_theta.dim() != prior_theta.dim() || phi.len() != q_theta.dim() {
        return Err(Error::DimensionMismatch("free_energy operands".into()));
    }
    let qm = q_theta.moments()?;
    let pm = prior_theta.moments()?;
    Ok(free_energy_from(&qm, q_tau, prior_theta, &pm, prior_tau, phi, y))
}

fn free_energy_from(
    qm: &GaussianMoments,
    q_tau: &GammaBelief,
    prior_theta: &GaussianBelief,
    pm: &GaussianMoments,
    prior_tau: &GammaBelief,
    phi: &DVector<f64>,
    y: f64,
) -> f64 {
    let complexity = gaussian_kl_from_moments(qm, prior_theta.precision(), &pm.mean, pm.log_det_precision)
        + gamma_kl(q_tau, prior_tau);
    complexity - expected_log_likelihood(phi, y, qm, q_tau)
}

/// Scalars that fix every quantity of a step whose coefficient factor is
/// `prior × message_theta`: `s = φᵀΣφ` and `r = y - μᵀφ` under the prior.
///
/// With `c = E[τ]` and `g = 1 + c s`, the determinant lemma and
/// Sherman-Morrison give
/// `KL(q‖p) = ½(ln g - c s/g + c² r² s/g²)` and
/// `E_q[(y - θᵀφ)²] = r²/g² + s/g`,
/// which avoids the cancellation the matrix forms suffer on ill-conditioned
/// priors.
#[derive(Debug, Clone, Copy)]
struct RankOne {
    s: f64,
    r: f64,
}

impl RankOne {
    fn terms(&self, c: f64) -> (f64, f64) {
        let cs = c * self.s;
        let g = 1.0 + cs;
        let kl = 0.5 * (cs.ln_1p() - cs / g + c * cs * self.r * self.r / (g * g));
        let sq = self.r * self.r / (g * g) + self.s / g;
        (kl.max(0.0), sq)
    }
}

/// Processes one observation `(u, y)`.
///
/// The prediction `ŷ_k = μ_{k-1}ᵀφ_k` is taken from the prior snapshot before
/// any update; its error `y - ŷ_k` enters the error history. On error the
/// state is left untouched.
pub fn vmp_step(state: &mut EstimatorState, u: f64, y: f64, settings: &VmpSettings) -> Result<StepReport> {
    settings.validate()?;
    if !u.is_finite() || !y.is_finite() {
        return Err(Error::NonFiniteSignal(format!("observation (u={u}, y={y})")));
    }
    let phi = state.spec.expand(u, &state.buffer)?;
    let prior_theta = &state.theta;
    let prior_tau = state.tau;
    let chol = factor(prior_theta.precision())?;
    let prior_mean = chol.solve(prior_theta.precision_weighted_mean());
    let prediction = prior_mean.dot(&phi);
    let mut half = phi.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut half);
    let shape = RankOne { s: half.norm_squared(), r: y - prediction };
    if !(shape.s.is_finite() && shape.r.is_finite()) {
        return Err(Error::NonFiniteSignal("regressor under prior".into()));
    }

    let mut q_tau = prior_tau;
    let mut theta_precision_factor = q_tau;
    let mut trace = FreeEnergyTrace { values: Vec::with_capacity(settings.n_iterations) };
    for _ in 0..settings.n_iterations {
        theta_precision_factor = q_tau;
        let (kl_theta, sq) = shape.terms(q_tau.mean());
        q_tau = gamma_product(&prior_tau, &GammaBelief::new(1.5, (0.5 * sq).max(RATE_FLOOR))?)?;
        let accuracy = 0.5 * (q_tau.expected_log() - (2.0 * PI).ln()) - 0.5 * q_tau.mean() * sq;
        let f = kl_theta + gamma_kl(&q_tau, &prior_tau) - accuracy;
        let converged = trace.last().is_some_and(|prev| (prev - f).abs() < settings.fe_tolerance);
        trace.values.push(f);
        if converged {
            break;
        }
    }
    let q_theta = gaussian_product(prior_theta, &message_theta(&phi, y, &theta_precision_factor)?)?;
    factor(q_theta.precision())?;

    let error = y - prediction;
    let mut buffer = state.buffer.clone();
    buffer.push(u, y, error)?;

    state.theta = q_theta;
    state.tau = q_tau;
    state.buffer = buffer;
    state.last_prediction = prediction;
    state.step_index += 1;
    Ok(StepReport { prediction, error, free_energy: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beliefs::gaussian_kl;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_spec() -> Arc<BasisSpec> {
        // φ = u_k only.
        let c = NarmaxConfig {
            input_delays: 0,
            output_delays: 0,
            error_delays: 0,
            degree: 1,
            include_constant: false,
            error_cross_terms: false,
        };
        Arc::new(enumerate_monomials(&c).unwrap())
    }

    #[test]
    fn message_theta_examples() {
        let tau = GammaBelief::new(2.0, 2.0).unwrap();
        let zero = message_theta(&DVector::zeros(3), 5.0, &tau).unwrap();
        assert_eq!(zero, GaussianBelief::vacuous(3));

        let m = message_theta(&DVector::from_element(1, 1.0), 2.0, &tau).unwrap();
        assert_eq!(m.precision()[(0, 0)], 1.0);
        assert_eq!(m.precision_weighted_mean()[0], 2.0);
    }

    #[test]
    fn message_tau_examples() {
        let theta = GaussianBelief::isotropic(2, 0.0, 1.0).unwrap();
        let phi = DVector::from_vec(vec![1.0, 1.0]);
        let m = message_tau(&phi, 2.0, &theta).unwrap();
        assert_eq!(m.shape(), 1.5);
        assert!((m.rate() - 3.0).abs() < 1e-14);

        // Zero residual and zero regressor meets the floor.
        let m = message_tau(&DVector::zeros(2), 0.0, &theta).unwrap();
        assert_eq!(m.shape(), 1.5);
        assert_eq!(m.rate(), RATE_FLOOR);
    }

    /// `E_q(θ)[ln N(y | θφ, 1/τ)]` as a function of τ, expanded in τ:
    /// `½ ln τ - ½ ln 2π - τ·rate`. Quadrature over θ recovers the rate.
    #[test]
    fn message_tau_rate_matches_quadrature() {
        let (mu, var, phi, y) = (0.4, 0.3, 1.7, 2.0);
        let theta = GaussianBelief::new(
            DMatrix::from_element(1, 1, 1.0 / var),
            DVector::from_element(1, mu / var),
        )
        .unwrap();
        let n = 20_001;
        let (lo, hi) = (mu - 12.0 * var.sqrt(), mu + 12.0 * var.sqrt());
        let h = (hi - lo) / (n - 1) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let t = lo + i as f64 * h;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let density = (-(t - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            acc += w * density * 0.5 * (y - t * phi).powi(2);
        }
        let quad_rate = acc * h;
        let m = message_tau(&DVector::from_element(1, phi), y, &theta).unwrap();
        assert!((m.rate() - quad_rate).abs() < 1e-9, "{} vs {quad_rate}", m.rate());
    }

    #[test]
    fn free_energy_at_priors_is_negative_expected_log_likelihood() {
        let theta = GaussianBelief::isotropic(2, 0.5, 2.0).unwrap();
        let tau = GammaBelief::new(3.0, 1.5).unwrap();
        let phi = DVector::from_vec(vec![1.0, -0.5]);
        let y = 0.7;
        let f = free_energy(&theta, &tau, &theta, &tau, &phi, y).unwrap();
        let m = theta.moments().unwrap();
        assert!((f + expected_log_likelihood(&phi, y, &m, &tau)).abs() < 1e-14);
        assert_eq!(gaussian_kl(&theta, &theta).unwrap(), 0.0);
    }

    /// Free energy as `E_q[ln q(θ)q(τ) - ln p(y|θ,τ) - ln p(θ) - ln p(τ)]` on a 2-D grid.
    #[test]
    fn free_energy_matches_grid_quadrature() {
        let prior_theta = GaussianBelief::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.2)).unwrap();
        let prior_tau = GammaBelief::new(3.0, 2.0).unwrap();
        let q_theta = GaussianBelief::new(DMatrix::from_element(1, 1, 2.5), DVector::from_element(1, 1.1)).unwrap();
        let q_tau = GammaBelief::new(3.5, 2.4).unwrap();
        let (phi, y) = (1.3, 0.9);
        let closed = free_energy(&q_theta, &q_tau, &prior_theta, &prior_tau, &DVector::from_element(1, phi), y).unwrap();

        let ln_normal = |x: f64, m: f64, prec: f64| 0.5 * (prec / (2.0 * PI)).ln() - 0.5 * prec * (x - m).powi(2);
        let (qp, qmean) = (2.5, 1.1 / 2.5);
        let (pp, pmean) = (1.0, 0.2);
        let (nt, ns) = (2001, 2000);
        let ht = 10.0 / (nt - 1) as f64;
        let hs = 50.0 / ns as f64;
        let mut total = 0.0;
        for i in 0..nt {
            let t = -5.0 + i as f64 * ht;
            let lq_t = ln_normal(t, qmean, qp);
            let wq_t = lq_t.exp() * ht;
            let lp_t = ln_normal(t, pmean, pp);
            for j in 1..=ns {
                let s = j as f64 * hs;
                let lq_s = q_tau.ln_pdf(s);
                let w = wq_t * lq_s.exp() * hs;
                let ll = ln_normal(y, t * phi, s);
                total += w * (lq_t + lq_s - ll - lp_t - prior_tau.ln_pdf(s));
            }
        }
        assert!((closed - total).abs() < 1e-3, "{closed} vs {total}");
    }

    #[test]
    fn near_delta_precision_reduces_to_conjugate_update() {
        let spec = scalar_spec();
        let tau0 = 4.0;
        let priors = Priors {
            theta: GaussianBelief::isotropic(1, 0.0, 1.0).unwrap(),
            tau: GammaBelief::new(1e8 * tau0, 1e8).unwrap(),
        };
        let mut state = EstimatorState::new(spec, priors).unwrap();
        let settings = VmpSettings { n_iterations: 1, fe_tolerance: 0.0 };
        let (mut lam, mut eta) = (1.0, 0.0);
        for &(u, y) in &[(1.0, 0.5), (-2.0, -1.2), (0.3, 0.1), (1.5, 0.8)] {
            state.step(u, y, &settings).unwrap();
            lam += tau0 * u * u;
            eta += tau0 * u * y;
            let p = state.theta().precision()[(0, 0)];
            let w = state.theta().precision_weighted_mean()[0];
            assert!((p - lam).abs() <= 1e-6 * lam);
            assert!((w - eta).abs() <= 1e-6 * eta.abs());
        }
    }

    #[test]
    fn shape_grows_by_half_each_step() {
        let config = NarmaxConfig { error_delays: 0, ..NarmaxConfig::benchmark() };
        let spec = Arc::new(enumerate_monomials(&config).unwrap());
        let mut state = EstimatorState::new(spec.clone(), Priors::weakly_informative(spec.dim())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..=200u32 {
            state.step(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), &VmpSettings::default()).unwrap();
            assert_eq!(state.tau().shape(), 10.0 + f64::from(k) / 2.0);
            assert_eq!(state.step_index(), u64::from(k));
        }
    }

    #[test]
    fn error_history_holds_prediction_errors() {
        let spec = Arc::new(enumerate_monomials(&NarmaxConfig::benchmark()).unwrap());
        let mut state = EstimatorState::new(spec.clone(), Priors::weakly_informative(spec.dim())).unwrap();
        let first = state.step(0.5, 1.0, &VmpSettings::default()).unwrap();
        assert_eq!(first.prediction, 0.0);
        assert_eq!(state.buffer().e_hist, vec![1.0]);
        let mean = state.theta().mean().unwrap();
        let phi = spec.expand(0.2, state.buffer()).unwrap();
        let second = state.step(0.2, 0.3, &VmpSettings::default()).unwrap();
        assert!((second.prediction - mean.dot(&phi)).abs() < 1e-14);
        assert_eq!(state.buffer().e_hist, vec![0.3 - second.prediction]);
        assert_eq!(state.buffer().y_hist, vec![0.3]);
        assert_eq!(state.buffer().u_hist, vec![0.2]);
    }

    #[test]
    fn failed_step_leaves_state_untouched() {
        let spec = scalar_spec();
        let mut state = EstimatorState::new(spec, Priors::weakly_informative(1)).unwrap();
        let before = state.clone();
        assert!(matches!(state.step(1.0, f64::NAN, &VmpSettings::default()), Err(Error::NonFiniteSignal(_))));
        assert_eq!(state, before);
        let bad = VmpSettings { n_iterations: 0, fe_tolerance: 0.0 };
        assert!(state.step(1.0, 1.0, &bad).is_err());
    }

    /// Random PD prior, random Gamma and random delay buffer on the benchmark basis.
    fn random_state(rng: &mut ChaCha8Rng) -> EstimatorState {
        let config = NarmaxConfig::benchmark();
        let d = enumerate_monomials(&config).unwrap().dim();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let precision = &a * a.transpose() + DMatrix::identity(d, d) * rng.random_range(0.1..2.0);
        let pwm = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let mut draw = || vec![rng.random_range(-2.0..2.0)];
        let buffer = RegressorBuffer { u_hist: draw(), y_hist: draw(), e_hist: draw() };
        let tau = GammaBelief::new(rng.random_range(0.5..20.0), rng.random_range(0.05..5.0)).unwrap();
        EstimatorState::from_checkpoint(Checkpoint {
            step_index: 0,
            theta: GaussianBelief::new(precision, pwm).unwrap(),
            tau,
            buffer,
            last_prediction: 0.0,
            config,
        })
        .unwrap()
    }

    #[test]
    fn coordinate_updates_never_increase_free_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut state = random_state(&mut rng);
            let settings = VmpSettings { n_iterations: 20, fe_tolerance: 0.0 };
            let r = state.step(rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0), &settings).unwrap();
            assert_eq!(r.free_energy.values.len(), 20);
            assert!(r.free_energy.is_non_increasing(1e-8), "{:?}", r.free_energy);
        }
    }

    #[test]
    fn step_trace_matches_matrix_free_energy() {
        let spec = Arc::new(enumerate_monomials(&NarmaxConfig::benchmark()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut state = EstimatorState::new(spec.clone(), Priors::isotropic(spec.dim(), 0.1, 2.0, 3.0, 1.5).unwrap()).unwrap();
        for _ in 0..6 {
            let (u, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let prior = state.clone();
            let phi = spec.expand(u, prior.buffer()).unwrap();
            let settings = VmpSettings { n_iterations: 4, fe_tolerance: 0.0 };
            let report = state.step(u, y, &settings).unwrap();
            let f = free_energy(state.theta(), state.tau(), prior.theta(), prior.tau(), &phi, y).unwrap();
            let last = report.free_energy.last().unwrap();
            assert!((f - last).abs() <= 1e-9 * last.abs().max(1.0), "{f} vs {last}");
        }
    }

    #[test]
    fn precision_increment_is_rank_one_psd() {
        let spec = Arc::new(enumerate_monomials(&NarmaxConfig::benchmark()).unwrap());
        let mut state = EstimatorState::new(spec.clone(), Priors::weakly_informative(spec.dim())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let before = state.theta().precision().clone();
            let u = rng.random_range(-1.0..1.0);
            let phi = spec.expand(u, state.buffer()).unwrap();
            state.step(u, rng.random_range(-1.0..1.0), &VmpSettings::default()).unwrap();
            let delta = state.theta().precision() - &before;
            let eig = delta.clone().symmetric_eigen().eigenvalues;
            assert!(eig.min() >= -1e-10 * delta.amax().max(1.0));
            // delta = c φφᵀ with c = E[τ] of the precision factor used in the last θ update.
            let outer = &phi * phi.transpose();
            let c = phi.dot(&(&delta * &phi)) / phi.norm_squared().powi(2);
            assert!(c > 0.0);
            assert!((&delta - &outer * c).amax() <= 1e-9 * delta.amax());
        }
    }

    #[test]
    fn checkpoint_round_trip_resumes_identically() {
        let spec = Arc::new(enumerate_monomials(&NarmaxConfig::benchmark()).unwrap());
        let mut a = EstimatorState::new(spec.clone(), Priors::weakly_informative(spec.dim())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<(f64, f64)> = (0..40).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for &(u, y) in &data[..20] {
            a.step(u, y, &VmpSettings::default()).unwrap();
        }
        let json = serde_json::to_string(&a.to_checkpoint()).unwrap();
        let mut b = EstimatorState::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(a, b);
        for &(u, y) in &data[20..] {
            a.step(u, y, &VmpSettings::default()).unwrap();
            b.step(u, y, &VmpSettings::default()).unwrap();
        }
        assert_eq!(a, b);
    }
}
