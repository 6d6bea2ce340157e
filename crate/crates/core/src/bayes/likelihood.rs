use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::prior::PriorSpec;
use crate::error::{Error, Result};
use crate::forward::SourceReceptorMatrix;
use crate::gp::EmulatedMatrix;

/// Seconds in a Julian year.
pub const SECONDS_PER_YEAR: f64 = 3.155_76e7;

/// One ton per year in kg/s.
pub const TON_PER_YEAR: f64 = 1000.0 / SECONDS_PER_YEAR;

/// Independent Gaussian measurement noise, `Sigma = lambda I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub lambda: f64,
}

impl NoiseModel {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be > 0 (got {lambda})")));
        }
        Ok(Self { lambda })
    }

    /// `-(d/2) ln(2 pi lambda)`.
    pub fn log_normalization(&self, d: usize) -> f64 {
        -0.5 * d as f64 * (2.0 * PI * self.lambda).ln()
    }
}

/// Gaussian log-likelihood of `w` given predictions `a q`, including the
/// normalization constant.
pub fn log_likelihood(a: &SourceReceptorMatrix, q: &[f64], w: &[f64], noise: &NoiseModel) -> f64 {
    log_likelihood_entries(&a.entries, q, w, noise.lambda)
}

/// Same as [`log_likelihood`] on a row-major `d x n` slice.
pub fn log_likelihood_entries(a: &[f64], q: &[f64], w: &[f64], lambda: f64) -> f64 {
    let n = q.len();
    let d = w.len();
    debug_assert_eq!(a.len(), d * n);
    let sq: f64 = a
        .chunks_exact(n)
        .zip(w)
        .map(|(row, wi)| {
            let r = row.iter().zip(q).map(|(a, q)| a * q).sum::<f64>() - wi;
            r * r
        })
        .sum();
    -0.5 * sq / lambda - 0.5 * d as f64 * (2.0 * PI * lambda).ln()
}

/// Emulated forward map plus data, noise and prior.
///
/// Emission rates are in ton/yr; the emulator maps kg/s to kg, so rates are
/// scaled by [`TON_PER_YEAR`] before the product.
#[derive(Debug, Clone)]
pub struct InverseProblem<'a> {
    pub emulator: &'a EmulatedMatrix,
    pub data: Vec<f64>,
    pub noise: NoiseModel,
    pub prior: PriorSpec,
}

impl<'a> InverseProblem<'a> {
    pub fn new(
        emulator: &'a EmulatedMatrix,
        data: Vec<f64>,
        noise: NoiseModel,
        prior: PriorSpec,
    ) -> Result<Self> {
        if data.len() != emulator.n_receptors() {
            return Err(Error::invalid(format!(
                "{} measurements for {} receptors",
                data.len(),
                emulator.n_receptors()
            )));
        }
        if prior.n_sources() != emulator.n_sources() || prior.n_theta() != emulator.bounds.dim() {
            return Err(Error::invalid("prior dimensions do not match the emulator"));
        }
        if data.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("measurements must be finite"));
        }
        Ok(Self {
            emulator,
            data,
            noise,
            prior,
        })
    }

    pub fn n_theta(&self) -> usize {
        self.prior.n_theta()
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Predicted measurements `A(theta) q` with `q` in ton/yr.
    pub fn predict(&self, theta: &[f64], q: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.emulator.n_emulators()];
        self.emulator.predict_into(theta, &mut a);
        a.chunks_exact(q.len())
            .map(|row| row.iter().zip(q).map(|(a, q)| a * q * TON_PER_YEAR).sum())
            .collect()
    }

    /// Log-likelihood at a joint state `x = (theta, q)`; `scratch` holds the
    /// emulated matrix.
    pub fn log_likelihood_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let (theta, q) = x.split_at(self.n_theta());
        self.emulator.predict_into(theta, scratch);
        let qs: Vec<f64> = q.iter().map(|q| q * TON_PER_YEAR).collect();
        log_likelihood_entries(scratch, &qs, &self.data, self.noise.lambda)
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.emulator.n_emulators()];
        self.log_likelihood_with(x, &mut scratch)
    }

    /// Unnormalized log posterior; the emulator is skipped outside the prior
    /// support.
    pub fn log_posterior_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        let (theta, q) = x.split_at(self.n_theta());
        let lp = self.prior.log_prior(theta, q);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.log_likelihood_with(x, scratch)
    }

    pub fn log_posterior(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.emulator.n_emulators()];
        self.log_posterior_with(x, &mut scratch)
    }
}
