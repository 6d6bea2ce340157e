//! Synthetic measurements from the full solver. Only the forward model is
//! used here, never an emulator.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{deposition_measurements, ModelParams, SiteConfig, WindRecord};
use crate::seed;

/// kg/s per ton/yr; duplicated from the inversion side to keep this module
/// free of inference code.
const TON_PER_YEAR: f64 = 1000.0 / 3.155_76e7;

/// Deposition at each collector (kg over the window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub receptors: Vec<String>,
    pub values: Vec<f64>,
}

impl Measurements {
    pub fn new(receptors: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if receptors.len() != values.len() || values.is_empty() {
            return Err(Error::invalid("one measurement per receptor"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("measurements must be finite"));
        }
        Ok(Self { receptors, values })
    }

    /// CSV `receptor,w`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["receptor", "w"])?;
        for (r, v) in self.receptors.iter().zip(&self.values) {
            w.write_record([r.clone(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut receptors = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::Config(format!("{}: expected `receptor,w`", path.display())));
            }
            receptors.push(rec[0].to_string());
            values.push(rec[1].trim().parse::<f64>().map_err(|e| {
                Error::Config(format!("{}: bad value `{}`: {e}", path.display(), &rec[1]))
            })?);
        }
        Self::new(receptors, values)
    }
}

/// Noise-free signal plus one noisy realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub theta: Vec<f64>,
    /// Rates in ton/yr.
    pub q: Vec<f64>,
    pub lambda: f64,
    pub seed: u64,
    pub clean: Vec<f64>,
    pub data: Measurements,
}

/// Noise-free deposition `A(theta) q` from the solver (`q` in ton/yr).
pub fn clean_signal(
    site: &SiteConfig,
    wind: &WindRecord,
    theta: &[f64],
    q: &[f64],
) -> Result<Vec<f64>> {
    if theta.len() != 3 {
        return Err(Error::invalid("theta must be (p, z0, L)"));
    }
    if q.len() != site.n_sources() || q.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("one non-negative rate per source"));
    }
    let params = ModelParams::new(theta[0], theta[1], theta[2]);
    let rates: Vec<f64> = q.iter().map(|v| v * TON_PER_YEAR).collect();
    deposition_measurements(&params, &rates, site, wind)
}

/// Adds `N(0, lambda)` noise to each entry. `lambda = 0` returns the input.
pub fn add_noise(clean: &[f64], lambda: f64, seed: u64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be >= 0 (got {lambda})")));
    }
    if lambda == 0.0 {
        return Ok(clean.to_vec());
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, lambda.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(clean.iter().map(|c| c + noise.sample(&mut rng)).collect())
}

/// Full-solver measurements at `(theta, q)` with noise variance `lambda`.
pub fn synthesize(
    site: &SiteConfig,
    wind: &WindRecord,
    theta: &[f64],
    q: &[f64],
    lambda: f64,
    seed: u64,
) -> Result<SyntheticData> {
    let clean = clean_signal(site, wind, theta, q)?;
    synthesize_from_clean(site, theta, q, clean, lambda, seed)
}

/// Same as [`synthesize`] with a precomputed noise-free signal.
pub fn synthesize_from_clean(
    site: &SiteConfig,
    theta: &[f64],
    q: &[f64],
    clean: Vec<f64>,
    lambda: f64,
    seed: u64,
) -> Result<SyntheticData> {
    let values = add_noise(&clean, lambda, seed)?;
    let receptors = site.receptors.iter().map(|r| r.label.clone()).collect();
    Ok(SyntheticData {
        theta: theta.to_vec(),
        q: q.to_vec(),
        lambda,
        seed,
        clean,
        data: Measurements::new(receptors, values)?,
    })
}
