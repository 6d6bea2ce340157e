use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::doe::ParamBox;
use crate::error::{Error, Result};

/// Probability mass kept below `tau * q_eng`.
pub const PRIOR_QUANTILE: f64 = 0.99;

/// Gamma density `q^(alpha-1) exp(-beta q)` (rate parametrization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 1.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma prior needs alpha > 1 and beta > 0 (got {alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mode(&self) -> f64 {
        (self.alpha - 1.0) / self.beta
    }

    pub fn cdf(&self, q: f64) -> f64 {
        if q <= 0.0 {
            0.0
        } else {
            gamma_lr(self.alpha, self.beta * q)
        }
    }

    /// Quantile by bisection on the CDF.
    pub fn quantile(&self, prob: f64) -> f64 {
        let mut hi = self.mode().max(1.0 / self.beta);
        while self.cdf(hi) < prob {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < prob {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn ln_pdf(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.alpha - 1.0) * q.ln() - self.beta * q + self.alpha * self.beta.ln()
            - ln_gamma(self.alpha)
    }
}

/// Gamma prior with mode `q_eng` and `PRIOR_QUANTILE` quantile `tau * q_eng`.
///
/// With `beta = (alpha - 1) / q_eng` the quantile condition reads
/// `P(alpha, (alpha - 1) tau) = 0.99`, which is solved by bisection on alpha.
pub fn gamma_from_mode_quantile(q_eng: f64, tau: f64) -> Result<GammaPrior> {
    if !(q_eng > 0.0 && q_eng.is_finite()) {
        return Err(Error::invalid(format!("engineering estimate must be > 0 (got {q_eng})")));
    }
    if !(tau > 1.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("spread tau must be > 1 (got {tau})")));
    }
    // Mass below tau * mode tends to 0 as alpha -> 1 and to 1 as alpha grows.
    let excess = |alpha: f64| gamma_lr(alpha, (alpha - 1.0) * tau) - PRIOR_QUANTILE;
    let mut lo = 1.0 + 1e-12;
    let mut hi = 2.0;
    if excess(lo) >= 0.0 {
        return Err(Error::NoBracket(format!(
            "tau = {tau}: quantile condition already met at alpha = {lo}"
        )));
    }
    while excess(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoBracket(format!(
                "tau = {tau}: alpha searched over (1, 1e12]"
            )));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    GammaPrior::new(alpha, (alpha - 1.0) / q_eng)
}

/// Independent prior: uniform box over the model parameters, gamma per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub bounds: ParamBox,
    pub sources: Vec<GammaPrior>,
    pub q_eng: Vec<f64>,
    pub tau: f64,
}

impl PriorSpec {
    pub fn new(bounds: ParamBox, q_eng: &[f64], tau: f64) -> Result<Self> {
        bounds.validate()?;
        let sources = q_eng
            .iter()
            .map(|&q| gamma_from_mode_quantile(q, tau))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bounds,
            sources,
            q_eng: q_eng.to_vec(),
            tau,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.bounds.dim()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn dim(&self) -> usize {
        self.n_theta() + self.n_sources()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = self.bounds.names.clone();
        names.extend((1..=self.n_sources()).map(|j| format!("q{j}")));
        names
    }

    /// Log prior up to the box volume; `-inf` outside the support.
    pub fn log_prior(&self, theta: &[f64], q: &[f64]) -> f64 {
        log_prior(self, theta, q)
    }
}

pub fn log_prior(prior: &PriorSpec, theta: &[f64], q: &[f64]) -> f64 {
    if q.len() != prior.n_sources() || !prior.bounds.contains(theta) {
        return f64::NEG_INFINITY;
    }
    prior
        .sources
        .iter()
        .zip(q)
        .map(|(g, &qj)| g.ln_pdf(qj))
        .sum()
}
