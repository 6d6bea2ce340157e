use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::mcmc::SampleSet;
use crate::error::{Error, Result};

/// How the marginal mode of a coordinate is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalFit {
    /// Gamma fit (moments, then maximum likelihood); for positive quantities.
    Gamma,
    /// Gaussian kernel density, Silverman bandwidth.
    Density,
}

/// Gamma shape/rate fitted to positive samples.
pub fn fit_gamma(x: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 || x.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return None;
    }
    let moment_shape = mean * mean / var;
    // ML shape solves ln a - digamma(a) = ln mean - mean(ln x); the left side
    // decreases in a.
    let s = mean.ln() - x.iter().map(|v| v.ln()).sum::<f64>() / n;
    let shape = if s > 0.0 && s.is_finite() {
        let g = |a: f64| a.ln() - digamma(a) - s;
        let (mut lo, mut hi) = (moment_shape, moment_shape);
        while g(lo) < 0.0 && lo > 1e-12 {
            lo *= 0.5;
        }
        while g(hi) > 0.0 && hi < 1e12 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    } else {
        moment_shape
    };
    Some((shape, shape / mean))
}

/// Mode of the fitted gamma, 0 when the shape is below 1.
pub fn gamma_mode(x: &[f64]) -> Option<f64> {
    fit_gamma(x).map(|(a, b)| ((a - 1.0) / b).max(0.0))
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let iqr = crate::sensitivity::quantile_sorted(sorted, 0.75)
        - crate::sensitivity::quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE (unnormalized) at `x` from sorted samples, truncated at 8 h.
fn kde_at(sorted: &[f64], h: f64, x: f64) -> f64 {
    let lo = sorted.partition_point(|v| *v < x - 8.0 * h);
    let hi = sorted.partition_point(|v| *v <= x + 8.0 * h);
    sorted[lo..hi]
        .iter()
        .map(|v| {
            let t = (x - v) / h;
            (-0.5 * t * t).exp()
        })
        .sum()
}

/// Normalized Gaussian kernel density (Silverman bandwidth) at each grid point.
pub fn kde_density(x: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = silverman_bandwidth(&sorted);
    if !(h > 0.0) {
        return vec![0.0; grid.len()];
    }
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter().map(|g| norm * kde_at(&sorted, h, *g)).collect()
}

/// Mode of a Gaussian kernel density estimate: grid search, then golden
/// section around the best grid point.
pub fn kde_mode(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if min == max {
        return min;
    }
    let h = silverman_bandwidth(&sorted);
    if !(h > 0.0) {
        return crate::sensitivity::quantile_sorted(&sorted, 0.5);
    }
    let m = 512;
    let step = (max - min) / (m - 1) as f64;
    let best = (0..m)
        .map(|i| min + i as f64 * step)
        .map(|g| (g, kde_at(&sorted, h, g)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(min, |(g, _)| g);
    let (mut a, mut b) = ((best - step).max(min), (best + step).min(max));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if kde_at(&sorted, h, c) >= kde_at(&sorted, h, d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Smallest radius `r` such that at least `mass` of the samples satisfy
/// `|x - x_star| <= r`.
pub fn credible_interval(samples: &[f64], x_star: f64, mass: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid(format!("mass must be in (0, 1) (got {mass})")));
    }
    let mut dist: Vec<f64> = samples.iter().map(|x| (x - x_star).abs()).collect();
    dist.sort_by(f64::total_cmp);
    let n = dist.len();
    let k = (1..=n)
        .find(|&k| k as f64 / n as f64 >= mass)
        .unwrap_or(n);
    Ok(dist[k - 1])
}

/// Per-coordinate point estimates and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSummary {
    pub names: Vec<String>,
    pub samples: usize,
    /// Marginal modes.
    pub estimate: Vec<f64>,
    /// Conditional (posterior) mean.
    pub mean: Vec<f64>,
    pub mass: f64,
    pub radius: Vec<f64>,
    /// Ball endpoints clipped to the prior support.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row-major second moment about `estimate`.
    pub covariance: Vec<f64>,
    /// Retained sample with the largest posterior density.
    pub map: Option<Vec<f64>>,
    /// Retained sample with the largest likelihood.
    pub ml: Option<Vec<f64>>,
    pub acceptance_rate: Option<f64>,
}

impl InferenceSummary {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Marginal modes, means, credible radii and the covariance about the modes.
///
/// `support` gives `(lower, upper)` per coordinate for clipping the ball
/// endpoints.
pub fn point_estimates(
    samples: &SampleSet,
    fits: &[MarginalFit],
    support: &[(f64, f64)],
    mass: f64,
) -> Result<InferenceSummary> {
    let dim = samples.dim;
    if fits.len() != dim || support.len() != dim {
        return Err(Error::invalid("one marginal fit and support range per coordinate"));
    }
    if samples.len() < 1000 {
        return Err(Error::invalid(format!(
            "point estimates need >= 1000 samples (got {})",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mut estimate = Vec::with_capacity(dim);
    let mut mean = Vec::with_capacity(dim);
    let mut radius = Vec::with_capacity(dim);
    for c in 0..dim {
        let col = samples.column(c);
        let m = col.iter().sum::<f64>() / n;
        let constant = col.iter().all(|v| *v == col[0]);
        let est = if constant {
            col[0]
        } else {
            match fits[c] {
                MarginalFit::Gamma => gamma_mode(&col).unwrap_or_else(|| kde_mode(&col)),
                MarginalFit::Density => kde_mode(&col),
            }
        };
        radius.push(credible_interval(&col, est, mass)?);
        estimate.push(est);
        mean.push(m);
    }
    let mut covariance = vec![0.0; dim * dim];
    for row in samples.rows() {
        for i in 0..dim {
            let di = row[i] - estimate[i];
            for j in 0..=i {
                covariance[i * dim + j] += di * (row[j] - estimate[j]);
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            covariance[i * dim + j] /= n;
            covariance[j * dim + i] = covariance[i * dim + j];
        }
    }
    let lower = (0..dim)
        .map(|c| (estimate[c] - radius[c]).max(support[c].0))
        .collect();
    let upper = (0..dim)
        .map(|c| (estimate[c] + radius[c]).min(support[c].1))
        .collect();
    let map = samples
        .log_post
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| samples.row(i).to_vec());
    Ok(InferenceSummary {
        names: samples.names.clone(),
        samples: samples.len(),
        estimate,
        mean,
        mass,
        radius,
        lower,
        upper,
        covariance,
        map,
        ml: None,
        acceptance_rate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, Gamma, Normal};

    fn set(cols: &[Vec<f64>]) -> SampleSet {
        let rows: Vec<Vec<f64>> = (0..cols[0].len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        let names = (0..cols.len()).map(|i| format!("x{i}")).collect();
        SampleSet::from_rows(names, &rows).unwrap()
    }

    #[test]
    fn three_point_radius() {
        assert_eq!(credible_interval(&[-1.0, 0.0, 1.0], 0.0, 0.34).unwrap(), 1.0);
        assert_eq!(credible_interval(&[-1.0, 0.0, 1.0], 0.0, 0.33).unwrap(), 0.0);
        assert_eq!(credible_interval(&[2.0; 10], 2.0, 0.68).unwrap(), 0.0);
        assert!(credible_interval(&[], 0.0, 0.5).is_err());
        assert!(credible_interval(&[1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_radius_matches_order_statistics() {
        let mut rng = crate::seed::rng(3);
        let x: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let r = credible_interval(&x, 0.5, 0.68).unwrap();
        assert!((r - 0.34).abs() < 0.02, "{r}");
    }

    proptest! {
        #[test]
        fn radius_agrees_with_brute_force(
            x in proptest::collection::vec(-10.0f64..10.0, 1..200),
            centre in -5.0f64..5.0,
            mass in 0.01f64..0.99,
        ) {
            let r = credible_interval(&x, centre, mass).unwrap();
            let n = x.len() as f64;
            let covered = |r: f64| x.iter().filter(|v| (*v - centre).abs() <= r).count() as f64 / n;
            // Candidate radii are the sample distances; the answer is the smallest that covers.
            let brute = x
                .iter()
                .map(|v| (v - centre).abs())
                .filter(|&c| covered(c) >= mass)
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(r, brute);
        }
    }

    #[test]
    fn constant_samples_collapse() {
        let s = set(&[vec![3.0; 1200], vec![7.5; 1200]]);
        let sum = point_estimates(
            &s,
            &[MarginalFit::Density, MarginalFit::Gamma],
            &[(0.0, 10.0), (0.0, f64::INFINITY)],
            0.68,
        )
        .unwrap();
        assert_eq!(sum.estimate, vec![3.0, 7.5]);
        assert_eq!(sum.mean, vec![3.0, 7.5]);
        assert_eq!(sum.radius, vec![0.0, 0.0]);
        assert!(sum.covariance.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = crate::seed::rng(4);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..5000).map(|_| nrm.sample(&mut rng)).collect();
        let grid: Vec<f64> = (0..=800).map(|i| -8.0 + 0.02 * i as f64).collect();
        let f = kde_density(&x, &grid);
        let integral: f64 = f.iter().sum::<f64>() * 0.02;
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
        assert!((f[400] - 0.3989).abs() < 0.03);
    }

    #[test]
    fn gamma_fit_recovers_mode() {
        let mut rng = crate::seed::rng(8);
        // Shape 3, rate 0.1 (scale 10): mode 20.
        let g = Gamma::new(3.0, 10.0).unwrap();
        let x: Vec<f64> = (0..50_000).map(|_| g.sample(&mut rng)).collect();
        let mode = gamma_mode(&x).unwrap();
        assert!((mode - 20.0).abs() < 0.05 * 20.0, "{mode}");
        let (a, b) = fit_gamma(&x).unwrap();
        assert!((a - 3.0).abs() < 0.1 && (b - 0.1).abs() < 0.005, "{a} {b}");
    }

    #[test]
    fn symmetric_samples_mode_near_mean() {
        let mut rng = crate::seed::rng(9);
        let nrm = Normal::new(4.0, 2.0).unwrap();
        let x: Vec<f64> = (0..50_000).map(|_| nrm.sample(&mut rng)).collect();
        let s = set(&[x]);
        let sum = point_estimates(&s, &[MarginalFit::Density], &[(-100.0, 100.0)], 0.68).unwrap();
        assert!((sum.estimate[0] - sum.mean[0]).abs() < 0.15, "{:?}", sum);
        // One standard deviation holds 68.27% of the mass.
        assert!((sum.radius[0] - 2.0).abs() < 0.1);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let mut rng = crate::seed::rng(10);
        let g = Gamma::new(2.5, 4.0).unwrap();
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3000).map(|_| g.sample(&mut rng)).collect())
            .collect();
        let mut cols = cols;
        cols[3] = cols[0].iter().zip(&cols[1]).map(|(a, b)| a + 0.5 * b).collect();
        let s = set(&cols);
        let sum = point_estimates(&s, &[MarginalFit::Gamma; 4], &[(0.0, f64::INFINITY); 4], 0.68).unwrap();
        let m = DMatrix::from_row_slice(4, 4, &sum.covariance);
        assert_eq!(m, m.transpose());
        let trace = m.trace();
        let eig = SymmetricEigen::new(m).eigenvalues;
        assert!(eig.iter().all(|e| *e >= -1e-10 * trace));
        assert!(sum.lower.iter().all(|l| *l >= 0.0));
    }
}
