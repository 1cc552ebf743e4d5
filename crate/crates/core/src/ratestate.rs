//! Discretised rate-and-state quantities: the state normaliser S_P and the Cox
//! intensity Λ.
//!
//! With `c = e^β·Δ` the normaliser at step `k` of a pressure path `P_0..P_k` is
//!
//! ```text
//! S_P(k) = exp{α(P_k − P_0)} + c · Σ_{i<k} exp{α(P_k − P_i)}
//! ```
//!
//! and the intensity is `Λ(k) = exp{θ₁ + θ₂V(k)} / S_P(k)`. When `e^β` is
//! negligible the sum drops out and `Λ(k) = exp{θ₁ + θ₂V(k) + α(P_0 − P_k)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Cube, IntensityCube};
use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sum_exp};

/// `e^β` below which the simplified intensity is used by [`IntensityForm::Auto`].
pub const DEFAULT_SIMPLIFY_THRESHOLD: f64 = 1e-6;

pub const PARAM_NAMES: [&str; 4] = ["theta1", "theta2", "alpha", "beta"];

/// (θ₁, θ₂, α, β). α is in 1/barA, θ₂ in 1/bcm, and `β = log(α/γ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(theta1: f64, theta2: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = ModelParams {
            theta1,
            theta2,
            alpha,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite model parameters {self:?}")));
        }
        if self.alpha < 0.0 {
            return Err(Error::invalid(format!("alpha must be >= 0 (got {})", self.alpha)));
        }
        Ok(())
    }

    pub fn exp_beta(&self) -> f64 {
        self.beta.exp()
    }

    pub fn is_simplified(&self, threshold: f64) -> bool {
        self.exp_beta() < threshold
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.theta1, self.theta2, self.alpha, self.beta]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ModelParams {
            theta1: a[0],
            theta2: a[1],
            alpha: a[2],
            beta: a[3],
        }
    }

    /// Parameter by name (`theta1`, `theta2`, `alpha`, `beta`).
    pub fn index_of(name: &str) -> Option<usize> {
        PARAM_NAMES.iter().position(|&n| n == name)
    }
}

/// Which intensity expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntensityForm {
    Full,
    Simplified,
    /// Simplified when `e^β` is below the threshold, full otherwise.
    Auto(f64),
}

impl Default for IntensityForm {
    fn default() -> Self {
        IntensityForm::Auto(DEFAULT_SIMPLIFY_THRESHOLD)
    }
}

impl IntensityForm {
    pub fn uses_simplified(&self, params: &ModelParams) -> bool {
        match *self {
            IntensityForm::Full => false,
            IntensityForm::Simplified => true,
            IntensityForm::Auto(t) => params.is_simplified(t),
        }
    }
}

/// `log S_P` at the last entry of `path`, evaluated term by term with log-sum-exp.
pub fn log_state_normalizer(path: &[f64], params: &ModelParams, delta: f64) -> Result<f64> {
    let (&pk, history) = path
        .split_last()
        .ok_or_else(|| Error::invalid("state normaliser needs a non-empty pressure path"))?;
    let log_c = params.beta + delta.ln();
    let mut terms = Vec::with_capacity(path.len());
    terms.push(params.alpha * (pk - path[0]));
    terms.extend(history.iter().map(|&pi| log_c + params.alpha * (pk - pi)));
    Ok(log_sum_exp(&terms))
}

/// S_P at the last entry of `path`.
pub fn state_normalizer(path: &[f64], params: &ModelParams, delta: f64) -> Result<f64> {
    log_state_normalizer(path, params, delta).map(f64::exp)
}

/// `log S_P(k)` for every prefix of `path`, by the one-step recursion
/// `S_k = exp{α(P_k − P_{k−1})}·(S_{k−1} + e^β·Δ)`, `S_0 = 1`.
pub fn log_state_series(path: &[f64], params: &ModelParams, delta: f64) -> Vec<f64> {
    let log_c = params.beta + delta.ln();
    let mut out = Vec::with_capacity(path.len());
    let mut prev = 0.0;
    for (k, &p) in path.iter().enumerate() {
        let l = if k == 0 {
            0.0
        } else {
            params.alpha * (p - path[k - 1]) + log_add_exp(prev, log_c)
        };
        out.push(l);
        prev = l;
    }
    out
}

/// `Λ = exp(θ₁ + θ₂V) / S_P`.
pub fn intensity(volume_bcm: f64, s_p: f64, params: &ModelParams) -> Result<f64> {
    if !(s_p > 0.0) {
        return Err(Error::invalid(format!("state normaliser must be positive (got {s_p})")));
    }
    Ok((params.theta1 + params.theta2 * volume_bcm).exp() / s_p)
}

/// `Λ = exp{θ₁ + θ₂V + α(P_0 − P_k)}`, the limit of [`intensity`] as `e^β → 0`.
pub fn intensity_simplified(volume_bcm: f64, p0: f64, pk: f64, params: &ModelParams) -> f64 {
    (params.theta1 + params.theta2 * volume_bcm + params.alpha * (p0 - pk)).exp()
}

/// `log Λ(k)` for one cell over its whole path.
pub fn log_intensity_series(
    pressure: &[f64],
    production: &[f64],
    params: &ModelParams,
    delta: f64,
    form: IntensityForm,
) -> Vec<f64> {
    debug_assert_eq!(pressure.len(), production.len());
    let base = |v: f64| params.theta1 + params.theta2 * v;
    if form.uses_simplified(params) {
        let p0 = pressure.first().copied().unwrap_or(0.0);
        pressure
            .iter()
            .zip(production)
            .map(|(&p, &v)| base(v) + params.alpha * (p0 - p))
            .collect()
    } else {
        log_state_series(pressure, params, delta)
            .into_iter()
            .zip(production)
            .map(|(l, &v)| base(v) - l)
            .collect()
    }
}

/// Λ over the cube with `P = m + E`; `latent = None` means `E = 0`.
pub fn intensity_cube(
    means: &Cube<f64>,
    latent: Option<&Cube<f64>>,
    production: &Cube<f64>,
    params: &ModelParams,
    delta: f64,
    form: IntensityForm,
) -> Result<IntensityCube> {
    params.validate()?;
    let (n_cells, n_steps) = means.shape();
    production.ensure_shape(n_cells, n_steps, "production cube")?;
    if let Some(e) = latent {
        e.ensure_shape(n_cells, n_steps, "latent field")?;
    }
    let rows: Vec<Vec<f64>> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let p: Vec<f64> = match latent {
                Some(e) => means.series(c).iter().zip(e.series(c)).map(|(m, e)| m + e).collect(),
                None => means.series(c).to_vec(),
            };
            log_intensity_series(&p, production.series(c), params, delta, form)
                .into_iter()
                .map(f64::exp)
                .collect()
        })
        .collect();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    if let Some(i) = data.iter().position(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::numeric(format!(
            "intensity {} at cell {} step {} is not positive and finite",
            data[i],
            i / n_steps,
            i % n_steps
        )));
    }
    Cube::from_vec(n_cells, n_steps, data)
}
