//! Choice of the measurement-noise variance by minimizing the expected
//! misfit-plus-deviation functional over a Gaussian-process fit in log space.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    postprocess_chain, sample_posterior, InverseProblem, McmcSettings, NoiseModel, PostSettings,
};
use crate::error::{Error, Result};
use crate::gp::{GaussianProcess, KernelFamily};
use crate::seed;

/// Number of grid points on which the fitted curve is minimized.
pub const CURVE_POINTS: usize = 1000;

/// Batches used for the Monte Carlo standard error.
const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseCalSettings {
    /// Weight of `|q - q_eng|` against the data misfit `|A q - w|`.
    pub delta: f64,
    pub mcmc: McmcSettings,
    pub post: PostSettings,
}

impl Default for NoiseCalSettings {
    fn default() -> Self {
        Self {
            delta: 0.5,
            mcmc: McmcSettings::default().with_steps(100_000),
            post: PostSettings::default(),
        }
    }
}

/// One Monte Carlo evaluation of the functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JEstimate {
    pub lambda: f64,
    pub j: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Posterior average of `(1 - delta) |A(theta) q - w| + delta |q - q_eng|`
/// at noise variance `lambda`. With `delta = 1/2` this is half the sum of the
/// two norms.
pub fn j_functional(
    problem: &InverseProblem<'_>,
    lambda: f64,
    settings: &NoiseCalSettings,
    seed: u64,
) -> Result<JEstimate> {
    if !(0.0..=1.0).contains(&settings.delta) {
        return Err(Error::invalid(format!("delta must be in [0, 1] (got {})", settings.delta)));
    }
    let mut at = problem.clone();
    at.noise = NoiseModel::new(lambda)?;
    let chain = sample_posterior(&at, &settings.mcmc, seed)?;
    let samples = postprocess_chain(&chain, settings.post.burn_in, settings.post.thinning)?;
    let nt = at.n_theta();
    let q_eng = &at.prior.q_eng;
    let values: Vec<f64> = samples
        .rows()
        .map(|x| {
            let (theta, q) = x.split_at(nt);
            let misfit = at
                .predict(theta, q)
                .iter()
                .zip(&at.data)
                .map(|(p, w)| (p - w) * (p - w))
                .sum::<f64>()
                .sqrt();
            let deviation = q
                .iter()
                .zip(q_eng)
                .map(|(q, e)| (q - e) * (q - e))
                .sum::<f64>()
                .sqrt();
            (1.0 - settings.delta) * misfit + settings.delta * deviation
        })
        .collect();
    let n = values.len();
    let j = values.iter().sum::<f64>() / n as f64;
    Ok(JEstimate {
        lambda,
        j,
        stderr: batch_means_stderr(&values),
        samples: n,
    })
}

/// Standard error of the mean from non-overlapping batch means.
pub fn batch_means_stderr(values: &[f64]) -> f64 {
    let b = BATCHES.min(values.len());
    if b < 2 {
        return 0.0;
    }
    let size = values.len() / b;
    let means: Vec<f64> = (0..b)
        .map(|i| values[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// `count` log-spaced values from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(Error::invalid(format!("bad log range [{lo}, {hi}] x {count}")));
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect())
}

/// Point of the fitted curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCalibration {
    pub lambda_star: f64,
    /// Minimum at either end of the candidate span.
    pub boundary: bool,
    pub evaluations: Vec<JEstimate>,
    pub failed: Vec<f64>,
    pub curve: Vec<CurvePoint>,
}

impl LambdaCalibration {
    /// CSV `lambda,J,stderr` and a JSON report.
    pub fn write(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let mut wtr = csv::Writer::from_path(csv_path)?;
        wtr.write_record(["lambda", "J", "stderr"])?;
        for e in &self.evaluations {
            wtr.write_record([e.lambda.to_string(), e.j.to_string(), e.stderr.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io(csv_path, e))?;
        let json_path = json_path.as_ref();
        let mut f = std::fs::File::create(json_path).map_err(|e| Error::io(json_path, e))?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())
            .map_err(|e| Error::io(json_path, e))
    }
}

/// Fits a squared-exponential GP over `log10 lambda` and returns the argmin
/// of its mean on a [`CURVE_POINTS`] grid spanning the candidates.
pub fn fit_lambda_curve(lambdas: &[f64], js: &[f64]) -> Result<(f64, bool, Vec<CurvePoint>)> {
    if lambdas.len() != js.len() || lambdas.len() < 3 {
        return Err(Error::invalid("need at least 3 (lambda, J) pairs"));
    }
    if lambdas.iter().any(|l| !(*l > 0.0)) || js.iter().any(|j| !j.is_finite()) {
        return Err(Error::invalid("lambda must be > 0 and J finite"));
    }
    let logs: Vec<f64> = lambdas.iter().map(|l| l.log10()).collect();
    let a = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let b = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if b - a < 2.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "candidates span {:.2} decades; at least 2 are needed",
            b - a
        )));
    }
    let x: Vec<Vec<f64>> = logs.iter().map(|l| vec![(l - a) / (b - a)]).collect();
    let gp = GaussianProcess::fit(&x, js, KernelFamily::SquaredExponential)?;
    let curve: Vec<CurvePoint> = (0..CURVE_POINTS)
        .map(|i| {
            let u = i as f64 / (CURVE_POINTS - 1) as f64;
            let p = gp.predict(&[u]);
            CurvePoint {
                lambda: 10f64.powf(a + u * (b - a)),
                mean: p.mean,
                sd: p.sd(),
            }
        })
        .collect();
    let best = curve
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.mean.total_cmp(&y.1.mean))
        .map_or(0, |(i, _)| i);
    let boundary = best == 0 || best == CURVE_POINTS - 1;
    Ok((curve[best].lambda, boundary, curve))
}

/// Evaluates the functional at each candidate (concurrently, independent
/// seeds) and minimizes the fitted curve.
pub fn calibrate_lambda(
    problem: &InverseProblem<'_>,
    candidates: &[f64],
    settings: &NoiseCalSettings,
    seed: u64,
) -> Result<LambdaCalibration> {
    let results: Vec<(f64, Result<JEstimate>)> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let s = seed::indexed_seed(seed, "lambda", i as u64);
            (lambda, j_functional(problem, lambda, settings, s))
        })
        .collect();
    let mut evaluations = Vec::new();
    let mut failed = Vec::new();
    for (lambda, r) in results {
        match r {
            Ok(e) => evaluations.push(e),
            Err(err) => {
                log::warn!("J({lambda:e}) failed: {err}");
                failed.push(lambda);
            }
        }
    }
    if evaluations.is_empty() {
        return Err(Error::Numerical("every J evaluation failed".into()));
    }
    let lambdas: Vec<f64> = evaluations.iter().map(|e| e.lambda).collect();
    let js: Vec<f64> = evaluations.iter().map(|e| e.j).collect();
    let (lambda_star, boundary, curve) = fit_lambda_curve(&lambdas, &js)?;
    Ok(LambdaCalibration {
        lambda_star,
        boundary,
        evaluations,
        failed,
        curve,
    })
}

fn rms(w: &[f64]) -> f64 {
    (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt()
}

/// Signal-to-noise ratio `RMS(w) / sqrt(lambda)`.
pub fn snr_report(w: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || w.is_empty() {
        return Err(Error::invalid("SNR needs lambda > 0 and data"));
    }
    Ok(rms(w) / lambda.sqrt())
}

/// Noise variance that gives `snr` for the signal `w`.
pub fn lambda_for_snr(w: &[f64], snr: f64) -> Result<f64> {
    if !(snr > 0.0) || w.is_empty() {
        return Err(Error::invalid("target SNR must be > 0"));
    }
    Ok((rms(w) / snr).powi(2))
}
