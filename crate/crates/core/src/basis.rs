//! Polynomial basis over delayed inputs, outputs and errors.
//!
//! Variables are laid out as `(u_k, u_{k-1}.., y_{k-1}.., e_{k-1}..)`, each
//! history most-recent-first. Monomials are ordered by total degree and then
//! lexicographically on their exponent tuple.

use nalgebra::DVector;
use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

fn default_true() -> bool {
    true
}

/// Delay orders and polynomial degree of a NARMAX model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarmaxConfig {
    pub input_delays: usize,
    pub output_delays: usize,
    pub error_delays: usize,
    pub degree: u32,
    #[serde(default = "default_true")]
    pub include_constant: bool,
    #[serde(default)]
    pub error_cross_terms: bool,
}

impl NarmaxConfig {
    /// One delay on every signal, cubic, error terms only as pure powers.
    pub fn benchmark() -> Self {
        Self {
            input_delays: 1,
            output_delays: 1,
            error_delays: 1,
            degree: 3,
            include_constant: true,
            error_cross_terms: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::InvalidArgument("polynomial degree must be at least 1".into()));
        }
        // Keeps the monomial table within reach; D grows combinatorially.
        if self.n_variables() > 64 || self.degree > 16 {
            return Err(Error::InvalidArgument(format!(
                "model too large: {} variables at degree {}",
                self.n_variables(),
                self.degree
            )));
        }
        Ok(())
    }

    /// Number of polynomial variables (current input plus all delays).
    pub fn n_variables(&self) -> usize {
        1 + self.input_delays + self.output_delays + self.error_delays
    }

    fn is_error_variable(&self, index: usize) -> bool {
        index >= 1 + self.input_delays + self.output_delays
    }
}

/// Ordered monomial exponent table defining the regressor `φ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSpec {
    config: NarmaxConfig,
    exponents: Vec<Vec<u32>>,
}

impl Serialize for BasisSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.exponents.serialize(serializer)
    }
}

/// Enumerates all admissible monomials for `config`.
pub fn enumerate_monomials(config: &NarmaxConfig) -> Result<BasisSpec> {
    config.validate()?;
    let n = config.n_variables();
    let mut exponents = Vec::new();
    let mut current = vec![0u32; n];
    collect_tuples(&mut current, 0, config.degree, &mut exponents);

    exponents.retain(|t| {
        let total: u32 = t.iter().sum();
        if total == 0 {
            return config.include_constant;
        }
        if config.error_cross_terms {
            return true;
        }
        let has_error = t.iter().enumerate().any(|(i, &p)| p > 0 && config.is_error_variable(i));
        !has_error || t.iter().filter(|&&p| p > 0).count() == 1
    });
    exponents.sort_by(|a, b| {
        let (da, db): (u32, u32) = (a.iter().sum(), b.iter().sum());
        da.cmp(&db).then_with(|| a.cmp(b))
    });
    Ok(BasisSpec { config: *config, exponents })
}

fn collect_tuples(current: &mut Vec<u32>, pos: usize, budget: u32, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() {
        out.push(current.clone());
        return;
    }
    for p in 0..=budget {
        current[pos] = p;
        collect_tuples(current, pos + 1, budget - p, out);
    }
    current[pos] = 0;
}

impl BasisSpec {
    pub fn config(&self) -> &NarmaxConfig {
        &self.config
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Regressor dimension `D`.
    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Index of the monomial with exactly this exponent tuple.
    pub fn position(&self, exponent: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == exponent)
    }

    /// Index of the monomial that is the first power of a single variable.
    pub fn linear_term(&self, variable: usize) -> Option<usize> {
        let mut e = vec![0u32; self.config.n_variables()];
        *e.get_mut(variable)? = 1;
        self.position(&e)
    }

    /// Variable indices of `u_k`, `u_{k-lag}`, `y_{k-lag}`, `e_{k-lag}` (lags from 1).
    pub fn input_variable(&self, lag: usize) -> usize {
        lag
    }

    pub fn output_variable(&self, lag: usize) -> usize {
        self.config.input_delays + lag
    }

    pub fn error_variable(&self, lag: usize) -> usize {
        self.config.input_delays + self.config.output_delays + lag
    }

    /// Evaluates `φ(u_now, buffer)`.
    pub fn expand(&self, u_now: f64, buffer: &RegressorBuffer) -> Result<DVector<f64>> {
        let c = &self.config;
        if buffer.u_hist.len() != c.input_delays
            || buffer.y_hist.len() != c.output_delays
            || buffer.e_hist.len() != c.error_delays
        {
            return Err(Error::DimensionMismatch("buffer does not match basis delays".into()));
        }
        let vars: Vec<f64> = std::iter::once(u_now)
            .chain(buffer.u_hist.iter().copied())
            .chain(buffer.y_hist.iter().copied())
            .chain(buffer.e_hist.iter().copied())
            .collect();
        self.expand_variables(&vars)
    }

    /// Evaluates every monomial at an explicit variable vector.
    pub fn expand_variables(&self, vars: &[f64]) -> Result<DVector<f64>> {
        if vars.len() != self.config.n_variables() {
            return Err(Error::DimensionMismatch("variable vector length".into()));
        }
        if let Some(bad) = vars.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSignal(format!("regressor variable {bad} is {}", vars[bad])));
        }
        let degree = self.config.degree as usize;
        // powers[v * (degree + 1) + p] = vars[v]^p
        let mut powers = vec![1.0; vars.len() * (degree + 1)];
        for (v, &x) in vars.iter().enumerate() {
            for p in 1..=degree {
                powers[v * (degree + 1) + p] = powers[v * (degree + 1) + p - 1] * x;
            }
        }
        let phi = DVector::from_iterator(
            self.exponents.len(),
            self.exponents.iter().map(|e| {
                e.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(v, &p)| powers[v * (degree + 1) + p as usize])
                    .product::<f64>()
            }),
        );
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSignal("regressor overflowed".into()));
        }
        Ok(phi)
    }
}

/// Rolling delayed inputs, outputs and prediction errors, most recent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressorBuffer {
    pub u_hist: Vec<f64>,
    pub y_hist: Vec<f64>,
    pub e_hist: Vec<f64>,
}

impl RegressorBuffer {
    pub fn new(config: &NarmaxConfig) -> Self {
        Self {
            u_hist: vec![0.0; config.input_delays],
            y_hist: vec![0.0; config.output_delays],
            e_hist: vec![0.0; config.error_delays],
        }
    }

    pub fn push(&mut self, u: f64, y: f64, e: f64) -> Result<()> {
        if !(u.is_finite() && y.is_finite() && e.is_finite()) {
            return Err(Error::NonFiniteSignal(format!("push of ({u}, {y}, {e})")));
        }
        shift_in(&mut self.u_hist, u);
        shift_in(&mut self.y_hist, y);
        shift_in(&mut self.e_hist, e);
        Ok(())
    }

    pub fn matches(&self, config: &NarmaxConfig) -> bool {
        self.u_hist.len() == config.input_delays
            && self.y_hist.len() == config.output_delays
            && self.e_hist.len() == config.error_delays
    }
}

fn shift_in(hist: &mut [f64], value: f64) {
    if hist.is_empty() {
        return;
    }
    hist.rotate_right(1);
    hist[0] = value;
}
