//! Gaussian and Gamma beliefs.
//!
//! Gaussians are stored in information form (precision matrix and
//! precision-weighted mean). Likelihood messages over the coefficients have
//! rank-one precision, so a [`GaussianBelief`] may hold a merely positive
//! semi-definite precision; anything that needs a mean or covariance goes
//! through a Cholesky factorization and fails on non-PD input.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::{Error, Result};

/// Largest accepted condition number estimate for a precision matrix.
pub const MAX_CONDITION: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Multivariate Gaussian in information form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GaussianRepr", try_from = "GaussianRepr")]
pub struct GaussianBelief {
    precision: DMatrix<f64>,
    precision_weighted_mean: DVector<f64>,
}

/// Mean, covariance and log-determinant of the precision of a PD Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_det_precision: f64,
}

impl GaussianBelief {
    pub fn new(precision: DMatrix<f64>, precision_weighted_mean: DVector<f64>) -> Result<Self> {
        let d = precision_weighted_mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "precision is {}x{}, precision-weighted mean has length {d}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        if precision.iter().chain(precision_weighted_mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateBelief("non-finite Gaussian parameters".into()));
        }
        let scale = precision.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in (i + 1)..d {
                if (precision[(i, j)] - precision[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidArgument(format!(
                        "precision is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { precision, precision_weighted_mean })
    }

    /// Builds the information form from a mean and a covariance.
    pub fn from_moments(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::DimensionMismatch("covariance does not match mean".into()));
        }
        let chol = factor(&covariance)?;
        let precision = symmetrize(chol.inverse());
        let pwm = &precision * &mean;
        Self::new(precision, pwm)
    }

    /// `N(mean, (scale * I)^-1)` with every mean entry equal to `mean`.
    pub fn isotropic(dim: usize, mean: f64, precision_scale: f64) -> Result<Self> {
        if !(precision_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "isotropic precision must be positive, got {precision_scale}"
            )));
        }
        let precision = DMatrix::identity(dim, dim) * precision_scale;
        let pwm = DVector::from_element(dim, mean * precision_scale);
        Self::new(precision, pwm)
    }

    /// Zero precision, zero precision-weighted mean: the vacuous message.
    pub fn vacuous(dim: usize) -> Self {
        Self { precision: DMatrix::zeros(dim, dim), precision_weighted_mean: DVector::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.precision_weighted_mean.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn precision_weighted_mean(&self) -> &DVector<f64> {
        &self.precision_weighted_mean
    }

    pub fn is_positive_definite(&self) -> bool {
        factor(&self.precision).is_ok()
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(factor(&self.precision)?.solve(&self.precision_weighted_mean))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(symmetrize(factor(&self.precision)?.inverse()))
    }

    /// Mean, covariance and `ln det(precision)` from a single factorization.
    pub fn moments(&self) -> Result<GaussianMoments> {
        let chol = factor(&self.precision)?;
        let mean = chol.solve(&self.precision_weighted_mean);
        let log_det_precision = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let covariance = symmetrize(chol.inverse());
        Ok(GaussianMoments { mean, covariance, log_det_precision })
    }
}

/// Product of two Gaussian densities: precisions and precision-weighted means add.
pub fn gaussian_product(a: &GaussianBelief, b: &GaussianBelief) -> Result<GaussianBelief> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply Gaussians of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(GaussianBelief {
        precision: &a.precision + &b.precision,
        precision_weighted_mean: &a.precision_weighted_mean + &b.precision_weighted_mean,
    })
}

/// `KL(q || p)` between two PD Gaussians.
pub fn gaussian_kl(q: &GaussianBelief, p: &GaussianBelief) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::DimensionMismatch("KL between Gaussians of different dimension".into()));
    }
    let qm = q.moments()?;
    let pm = p.moments()?;
    Ok(gaussian_kl_from_moments(&qm, p.precision(), &pm.mean, pm.log_det_precision))
}

pub(crate) fn gaussian_kl_from_moments(
    q: &GaussianMoments,
    p_precision: &DMatrix<f64>,
    p_mean: &DVector<f64>,
    p_log_det_precision: f64,
) -> f64 {
    let d = q.mean.len() as f64;
    // tr(P_p Σ_q) = Σ_ij P_p[i,j] Σ_q[j,i]; both symmetric.
    let trace = p_precision.component_mul(&q.covariance).sum();
    let diff = &q.mean - p_mean;
    let quad = diff.dot(&(p_precision * &diff));
    let kl = 0.5 * (trace + quad - d + q.log_det_precision - p_log_det_precision);
    kl.max(0.0)
}

/// Gamma density over a precision, parameterized by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr")]
pub struct GammaBelief {
    shape: f64,
    rate: f64,
}

impl GammaBelief {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::DegenerateBelief(format!(
                "Gamma needs positive finite shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    /// `E[ln τ]`.
    pub fn expected_log(&self) -> f64 {
        digamma(self.shape) - self.rate.ln()
    }

    pub fn ln_pdf(&self, tau: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * tau.ln()
            - self.rate * tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMoments {
    pub mean: f64,
    pub variance: f64,
    pub e_log: f64,
}

pub fn gamma_moments(g: &GammaBelief) -> GammaMoments {
    GammaMoments { mean: g.mean(), variance: g.variance(), e_log: g.expected_log() }
}

/// Product of two Gamma densities over the same variable.
pub fn gamma_product(a: &GammaBelief, b: &GammaBelief) -> Result<GammaBelief> {
    // Subtracting one before adding keeps half-integer shapes exact.
    let shape = a.shape + (b.shape - 1.0);
    if !(shape > 0.0) {
        return Err(Error::DegenerateBelief(format!(
            "Gamma product shape {} + {} - 1 is not positive",
            a.shape, b.shape
        )));
    }
    GammaBelief::new(shape, a.rate + b.rate)
}

/// `KL(q || p)` between two Gamma densities.
pub fn gamma_kl(q: &GammaBelief, p: &GammaBelief) -> f64 {
    let kl = (q.shape - p.shape) * digamma(q.shape) - ln_gamma(q.shape)
        + ln_gamma(p.shape)
        + p.shape * (q.rate.ln() - p.rate.ln())
        + q.shape * (p.rate - q.rate) / q.rate;
    kl.max(0.0)
}

pub(crate) fn factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Conditioning("matrix is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let lo = diag.min();
    let hi = diag.max();
    // Pivot ratio squared is a cheap lower bound on the condition number.
    if !(lo > 0.0) || (hi / lo).powi(2) > MAX_CONDITION {
        return Err(Error::Conditioning(format!(
            "condition number estimate {:.3e} exceeds {MAX_CONDITION:.0e}",
            (hi / lo).powi(2)
        )));
    }
    Ok(chol)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    precision: Vec<Vec<f64>>,
    precision_weighted_mean: Vec<f64>,
}

impl From<GaussianBelief> for GaussianRepr {
    fn from(g: GaussianBelief) -> Self {
        let precision = g.precision.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self { precision, precision_weighted_mean: g.precision_weighted_mean.iter().copied().collect() }
    }
}

impl TryFrom<GaussianRepr> for GaussianBelief {
    type Error = Error;

    fn try_from(r: GaussianRepr) -> Result<Self> {
        let d = r.precision_weighted_mean.len();
        if r.precision.len() != d || r.precision.iter().any(|row| row.len() != d) {
            return Err(Error::DimensionMismatch(format!("precision must be {d}x{d}")));
        }
        let precision = DMatrix::from_fn(d, d, |i, j| r.precision[i][j]);
        GaussianBelief::new(precision, DVector::from_vec(r.precision_weighted_mean))
    }
}

#[derive(Deserialize)]
struct GammaRepr {
    shape: f64,
    rate: f64,
}

impl TryFrom<GammaRepr> for GammaBelief {
    type Error = Error;

    fn try_from(r: GammaRepr) -> Result<Self> {
        GammaBelief::new(r.shape, r.rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn scalar(precision: f64, pwm: f64) -> GaussianBelief {
        GaussianBelief::new(DMatrix::from_element(1, 1, precision), DVector::from_element(1, pwm))
            .unwrap()
    }

    /// Random SPD matrix `A Aᵀ + eps I`.
    fn random_spd(entries: &[f64], d: usize, eps: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |i, j| entries[i * d + j]);
        &a * a.transpose() + DMatrix::identity(d, d) * eps
    }

    #[test]
    fn product_with_vacuous_message_is_identity() {
        let a = GaussianBelief::isotropic(2, 0.0, 1.0).unwrap();
        let c = gaussian_product(&a, &GaussianBelief::vacuous(2)).unwrap();
        assert_eq!(c, a);
    }

    #[test]
    fn scalar_product_completes_the_square() {
        // N(1, 1) * N(2, 1/3): precision 4, mean (1*1 + 3*2)/4.
        let c = gaussian_product(&scalar(1.0, 1.0), &scalar(3.0, 6.0)).unwrap();
        assert_eq!(c.precision()[(0, 0)], 4.0);
        assert!((c.mean().unwrap()[0] - 7.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = GaussianBelief::vacuous(2);
        let b = GaussianBelief::vacuous(3);
        assert!(matches!(gaussian_product(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rank_one_message_adds_term_by_term() {
        let prior = GaussianBelief::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        let phi = DVector::from_vec(vec![0.3, 2.0]);
        let (e_tau, y) = (4.0, 1.5);
        let msg = GaussianBelief::new(&phi * phi.transpose() * e_tau, &phi * (e_tau * y)).unwrap();
        assert!(!msg.is_positive_definite());
        let post = gaussian_product(&prior, &msg).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expected = prior.precision()[(i, j)] + e_tau * phi[i] * phi[j];
                assert_eq!(post.precision()[(i, j)], expected);
            }
            let expected = prior.precision_weighted_mean()[i] + e_tau * y * phi[i];
            assert_eq!(post.precision_weighted_mean()[i], expected);
        }
    }

    #[test]
    fn asymmetric_precision_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(GaussianBelief::new(p, DVector::zeros(2)).is_err());
    }

    #[test]
    fn semidefinite_precision_has_no_mean() {
        let g = GaussianBelief::vacuous(2);
        assert!(matches!(g.mean(), Err(Error::Conditioning(_))));
    }

    #[test]
    fn ill_conditioned_precision_is_reported() {
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]));
        let g = GaussianBelief::new(p, DVector::zeros(2)).unwrap();
        assert!(matches!(g.covariance(), Err(Error::Conditioning(_))));
    }

    #[test]
    fn gamma_product_examples() {
        let prior = GammaBelief::new(10.0, 0.1).unwrap();
        let msg = GammaBelief::new(1.5, 0.5).unwrap();
        let c = gamma_product(&prior, &msg).unwrap();
        assert_eq!(c.shape(), 10.5);
        assert!((c.rate() - 0.6).abs() < 1e-15);

        let exp = GammaBelief::new(1.0, 2.0).unwrap();
        let b = GammaBelief::new(3.7, 0.25).unwrap();
        let c = gamma_product(&exp, &b).unwrap();
        assert_eq!(c.shape(), 3.7);
        assert_eq!(c.rate(), 2.25);
    }

    #[test]
    fn gamma_product_shape_grows_by_half_per_message() {
        let mut g = GammaBelief::new(10.0, 0.1).unwrap();
        for k in 1..=1000u32 {
            g = gamma_product(&g, &GammaBelief::new(1.5, 0.01).unwrap()).unwrap();
            assert_eq!(g.shape(), 10.0 + f64::from(k) / 2.0);
        }
    }

    #[test]
    fn gamma_product_degenerate_shape() {
        let a = GammaBelief::new(0.25, 1.0).unwrap();
        let b = GammaBelief::new(0.5, 1.0).unwrap();
        assert!(matches!(gamma_product(&a, &b), Err(Error::DegenerateBelief(_))));
    }

    #[test]
    fn gamma_rejects_invalid_parameters() {
        assert!(GammaBelief::new(0.0, 1.0).is_err());
        assert!(GammaBelief::new(1.0, -1.0).is_err());
        assert!(GammaBelief::new(f64::NAN, 1.0).is_err());
        assert!(serde_json::from_str::<GammaBelief>(r#"{"shape": -1.0, "rate": 1.0}"#).is_err());
    }

    #[test]
    fn gaussian_kl_examples() {
        let std2 = GaussianBelief::isotropic(2, 0.0, 1.0).unwrap();
        assert_eq!(gaussian_kl(&std2, &std2).unwrap(), 0.0);

        // ½ μ² for unit variances.
        let kl = gaussian_kl(&scalar(1.0, 1.0), &scalar(1.0, 0.0)).unwrap();
        assert!((kl - 0.5).abs() < 1e-15);

        // Covariance 2I against I: ½(4 - 2 - 2 ln 2).
        let wide = GaussianBelief::isotropic(2, 0.0, 0.5).unwrap();
        let kl = gaussian_kl(&wide, &std2).unwrap();
        assert!((kl - (1.0 - 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn gaussian_kl_requires_pd() {
        let bad = GaussianBelief::vacuous(1);
        assert!(gaussian_kl(&bad, &scalar(1.0, 0.0)).is_err());
    }

    #[test]
    fn gamma_moments_examples() {
        let m = gamma_moments(&GammaBelief::new(10.0, 0.1).unwrap());
        assert!((m.mean - 100.0).abs() < 1e-12);
        assert!((m.variance - 1000.0).abs() < 1e-9);

        let m = gamma_moments(&GammaBelief::new(1.0, 1.0).unwrap());
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.variance, 1.0);
        assert!((m.e_log + EULER_GAMMA).abs() < 1e-14);

        let m = gamma_moments(&GammaBelief::new(1.5, 4.0).unwrap());
        assert_eq!(m.mean, 1.5 / 4.0);
    }

    #[test]
    fn digamma_reference_values() {
        // ψ(1/2) = -γ - 2 ln 2, ψ(x+1) = ψ(x) + 1/x.
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * 2f64.ln()).abs() < 1e-13);
        for &x in &[1e-3, 0.1, 0.7, 3.3, 11.9, 40.0] {
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-12 * (1.0 / x).max(1.0));
        }
    }

    /// `∫ q ln(q/p) dτ` by Simpson's rule in `x = ln τ`.
    fn gamma_kl_quadrature(q: &GammaBelief, p: &GammaBelief) -> f64 {
        let hi = (q.mean() + 60.0 * q.variance().sqrt()).ln();
        let lo = -80.0 / q.shape().min(1.0);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| {
            let tau = x.exp();
            let lq = q.ln_pdf(tau);
            let lp = p.ln_pdf(tau);
            (lq + x).exp() * (lq - lp)
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gamma_kl_examples_against_quadrature() {
        let a = GammaBelief::new(2.0, 3.0).unwrap();
        assert_eq!(gamma_kl(&a, &a), 0.0);

        let q = GammaBelief::new(2.0, 1.0).unwrap();
        let p = GammaBelief::new(1.0, 1.0).unwrap();
        // Closed form: ψ(2) - ln Γ(2) + ln Γ(1) = 1 - γ.
        assert!((gamma_kl(&q, &p) - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        assert!((gamma_kl(&q, &p) - gamma_kl_quadrature(&q, &p)).abs() < 1e-6);

        // Rate scaling by c: α(ln c + 1/c - 1).
        let (alpha, beta, c) = (3.0, 2.0, 2.5);
        let q = GammaBelief::new(alpha, beta).unwrap();
        let p = GammaBelief::new(alpha, c * beta).unwrap();
        let expected = alpha * ((1.0 / c).ln() + c - 1.0);
        assert!((gamma_kl(&q, &p) - expected).abs() < 1e-12);
        assert!((gamma_kl(&q, &p) - gamma_kl_quadrature(&q, &p)).abs() < 1e-6);
    }

    #[test]
    fn gamma_kl_matches_quadrature_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut draw = || GammaBelief::new(rng.random_range(0.5..20.0), rng.random_range(0.5..20.0)).unwrap();
            let (q, p) = (draw(), draw());
            let closed = gamma_kl(&q, &p);
            let quad = gamma_kl_quadrature(&q, &p);
            assert!((closed - quad).abs() < 1e-6, "{q:?} {p:?}: {closed} vs {quad}");
        }
    }

    #[test]
    fn json_shapes() {
        let g = GaussianBelief::isotropic(2, 1.0, 2.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&g).unwrap();
        assert_eq!(v["precision"], serde_json::json!([[2.0, 0.0], [0.0, 2.0]]));
        assert_eq!(v["precision_weighted_mean"], serde_json::json!([2.0, 2.0]));
        let back: GaussianBelief = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);

        let t = GammaBelief::new(10.0, 0.1).unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), r#"{"shape":10.0,"rate":0.1}"#);
    }

    fn spd_strategy(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (prop::collection::vec(-2.0f64..2.0, d * d), 0.05f64..2.0)
            .prop_map(move |(e, eps)| random_spd(&e, d, eps))
    }

    fn belief_strategy(d: usize) -> impl Strategy<Value = GaussianBelief> {
        (spd_strategy(d), prop::collection::vec(-3.0f64..3.0, d))
            .prop_map(|(p, m)| GaussianBelief::new(p, DVector::from_vec(m)).unwrap())
    }

    fn gamma_strategy() -> impl Strategy<Value = GammaBelief> {
        (1.0f64..30.0, 0.05f64..20.0).prop_map(|(a, b)| GammaBelief::new(a, b).unwrap())
    }

    fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol * a.amax().max(b.amax()).max(1e-300)
    }

    proptest! {
        #[test]
        fn gaussian_product_commutes_and_associates(
            a in belief_strategy(3), b in belief_strategy(3), c in belief_strategy(3)
        ) {
            let ab = gaussian_product(&a, &b).unwrap();
            let ba = gaussian_product(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            let l = gaussian_product(&ab, &c).unwrap();
            let r = gaussian_product(&a, &gaussian_product(&b, &c).unwrap()).unwrap();
            prop_assert!(rel_close(l.precision(), r.precision(), 1e-12));
            let lv = DMatrix::from_column_slice(3, 1, l.precision_weighted_mean().as_slice());
            let rv = DMatrix::from_column_slice(3, 1, r.precision_weighted_mean().as_slice());
            prop_assert!(rel_close(&lv, &rv, 1e-12));
            prop_assert!(ab.is_positive_definite());
        }

        #[test]
        fn gamma_product_commutes_and_associates(
            a in gamma_strategy(), b in gamma_strategy(), c in gamma_strategy()
        ) {
            let ab = gamma_product(&a, &b).unwrap();
            let ba = gamma_product(&b, &a).unwrap();
            prop_assert!((ab.shape() - ba.shape()).abs() <= 1e-12 * ab.shape());
            prop_assert_eq!(ab.rate(), ba.rate());
            let l = gamma_product(&ab, &c).unwrap();
            let r = gamma_product(&a, &gamma_product(&b, &c).unwrap()).unwrap();
            prop_assert!((l.shape() - r.shape()).abs() <= 1e-12 * l.shape());
            prop_assert!((l.rate() - r.rate()).abs() <= 1e-12 * l.rate());
        }

        #[test]
        fn kl_is_nonnegative_and_zero_on_self(
            q in belief_strategy(3), p in belief_strategy(3),
            gq in gamma_strategy(), gp in gamma_strategy()
        ) {
            prop_assert!(gaussian_kl(&q, &p).unwrap() >= 0.0);
            prop_assert!(gaussian_kl(&q, &q).unwrap() < 1e-12);
            prop_assert!(gamma_kl(&gq, &gp) >= 0.0);
            prop_assert!(gamma_kl(&gq, &gq) < 1e-12);
        }

        #[test]
        fn information_form_round_trip(
            q in prop::collection::vec(-1.0f64..1.0, 16),
            log_cond in 0.0f64..6.0,
            mean in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            // Orthogonal basis from QR, eigenvalues spread over [1, 10^log_cond].
            let qr = DMatrix::from_fn(4, 4, |i, j| q[i * 4 + j] + if i == j { 2.5 } else { 0.0 }).qr();
            let basis = qr.q();
            let eig = DVector::from_fn(4, |i, _| 10f64.powf(log_cond * i as f64 / 3.0));
            let precision = symmetrize(&basis * DMatrix::from_diagonal(&eig) * basis.transpose());
            let g = GaussianBelief::new(precision.clone(), &precision * DVector::from_vec(mean)).unwrap();
            let back = GaussianBelief::from_moments(g.mean().unwrap(), g.covariance().unwrap()).unwrap();
            prop_assert!(rel_close(g.precision(), back.precision(), 1e-10));
            let lv = DMatrix::from_column_slice(4, 1, g.precision_weighted_mean().as_slice());
            let rv = DMatrix::from_column_slice(4, 1, back.precision_weighted_mean().as_slice());
            prop_assert!(rel_close(&lv, &rv, 1e-10));
        }
    }
}
