use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelFamily};
use crate::error::{Error, Result};

/// Diagonal jitter relative to `r1`: first try and last resort.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Hyperparameter search grid in log10 units: `r1` relative to the sample
/// variance of the targets, `r2` in unit-cube input coordinates.
pub const LOG_R1_RANGE: [f64; 2] = [-6.0, 2.0];
pub const LOG_R2_RANGE: [f64; 2] = [-3.0, 1.0];
pub const GRID_POINTS: usize = 25;
pub const DESCENT_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// The query point lies outside the unit cube.
    pub extrapolating: bool,
}

impl Prediction {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Interpolating GP with a constant prior mean equal to the training average.
/// Inputs are expected in unit-cube coordinates.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    kernel: Kernel,
    jitter: f64,
    mean: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    log_likelihood: f64,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_training(x: &[Vec<f64>], y: &[f64]) -> Result<()> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::invalid(format!(
            "GP needs K >= 2 matching inputs and values (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let m = x[0].len();
    if m == 0 || x.iter().any(|p| p.len() != m) {
        return Err(Error::invalid("GP inputs must share one positive dimension"));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("GP training data must be finite"));
    }
    Ok(())
}

/// Correlation matrix plus `eps` on the diagonal, filled symmetrically.
fn correlation_matrix(x: &[Vec<f64>], family: KernelFamily, r2: f64, eps: f64) -> DMatrix<f64> {
    let k = x.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        g[(i, i)] = 1.0 + eps;
        for j in 0..i {
            let c = family.correlation_sq(sq_dist(&x[i], &x[j]), r2);
            g[(i, j)] = c;
            g[(j, i)] = c;
        }
    }
    g
}

fn jitter_levels() -> impl Iterator<Item = f64> {
    std::iter::successors(Some(JITTER_START), |e| Some(e * 10.0))
        .take_while(|e| *e <= JITTER_MAX * (1.0 + 1e-9))
}

/// Cholesky with jitter escalation; returns the factor and the jitter used.
fn factor(
    x: &[Vec<f64>],
    family: KernelFamily,
    r2: f64,
    scale: f64,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    jitter_levels().find_map(|eps| {
        let g = correlation_matrix(x, family, r2, eps) * scale;
        Cholesky::new(g).map(|c| (c, eps))
    })
}

/// Profile of the log marginal likelihood at fixed `r2`:
/// `ll(r1) = -quad / (2 r1) - logdet / 2 - K/2 ln r1 - K/2 ln 2 pi`.
struct Profile {
    quad: f64,
    logdet: f64,
    k: f64,
}

impl Profile {
    fn new(x: &[Vec<f64>], yc: &DVector<f64>, family: KernelFamily, r2: f64, eps: f64) -> Option<Self> {
        let chol = Cholesky::new(correlation_matrix(x, family, r2, eps))?;
        let l = chol.l_dirty();
        let logdet = 2.0 * (0..yc.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
        let quad = yc.dot(&chol.solve(yc));
        (quad.is_finite() && logdet.is_finite()).then_some(Self {
            quad,
            logdet,
            k: yc.len() as f64,
        })
    }

    fn at(&self, r1: f64) -> f64 {
        -0.5 * self.quad / r1
            - 0.5 * self.logdet
            - 0.5 * self.k * r1.ln()
            - 0.5 * self.k * std::f64::consts::TAU.ln()
    }
}

/// Grid plus coordinate descent in `(log10 r1 / scale, log10 r2)` at a fixed
/// jitter; `None` if no grid point factorizes.
fn search(
    x: &[Vec<f64>],
    yc: &DVector<f64>,
    family: KernelFamily,
    scale: f64,
    eps: f64,
) -> Option<(f64, f64)> {
    let eval = |a: f64, b: f64| -> f64 {
        match Profile::new(x, yc, family, 10f64.powf(b), eps) {
            Some(p) => p.at(scale * 10f64.powf(a)),
            None => f64::NEG_INFINITY,
        }
    };
    let step_a = (LOG_R1_RANGE[1] - LOG_R1_RANGE[0]) / (GRID_POINTS - 1) as f64;
    let step_b = (LOG_R2_RANGE[1] - LOG_R2_RANGE[0]) / (GRID_POINTS - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for jb in 0..GRID_POINTS {
        let b = LOG_R2_RANGE[0] + step_b * jb as f64;
        let Some(p) = Profile::new(x, yc, family, 10f64.powf(b), eps) else {
            continue;
        };
        for ia in 0..GRID_POINTS {
            let a = LOG_R1_RANGE[0] + step_a * ia as f64;
            let ll = p.at(scale * 10f64.powf(a));
            if ll > best.0 {
                best = (ll, a, b);
            }
        }
    }
    if !best.0.is_finite() {
        return None;
    }
    let (mut ll, mut a, mut b) = best;
    let (mut sa, mut sb) = (step_a, step_b);
    for _ in 0..DESCENT_ROUNDS {
        for axis in 0..2 {
            for dir in [1.0, -1.0] {
                let (na, nb) = if axis == 0 { (a + dir * sa, b) } else { (a, b + dir * sb) };
                let inside = (LOG_R1_RANGE[0]..=LOG_R1_RANGE[1]).contains(&na)
                    && (LOG_R2_RANGE[0]..=LOG_R2_RANGE[1]).contains(&nb);
                if !inside {
                    continue;
                }
                let cand = eval(na, nb);
                if cand > ll {
                    (ll, a, b) = (cand, na, nb);
                    break;
                }
            }
        }
        sa *= 0.5;
        sb *= 0.5;
    }
    Some((a, b))
}

impl GaussianProcess {
    /// Maximum-likelihood fit: a 25 x 25 log grid followed by coordinate
    /// descent. The search runs at the smallest jitter level for which some
    /// grid point factorizes, so the emulator stays interpolating whenever
    /// possible.
    pub fn fit(x: &[Vec<f64>], y: &[f64], family: KernelFamily) -> Result<Self> {
        check_training(x, y)?;
        let k = y.len();
        let mean = y.iter().sum::<f64>() / k as f64;
        let yc = DVector::from_iterator(k, y.iter().map(|v| v - mean));
        let var = yc.norm_squared() / k as f64;
        let scale = if var > 0.0 { var } else { 1.0 };
        for eps in jitter_levels() {
            if let Some((a, b)) = search(x, &yc, family, scale, eps) {
                let kernel = Kernel::new(family, scale * 10f64.powf(a), 10f64.powf(b))?;
                return Self::from_parts(x.to_vec(), y.to_vec(), kernel, eps);
            }
        }
        Err(Error::Fit(format!(
            "no length scale in 10^[{}, {}] gave a factorizable Gram matrix (K = {k}, jitter up to {JITTER_MAX} r1)",
            LOG_R2_RANGE[0], LOG_R2_RANGE[1]
        )))
    }

    /// Conditions on fixed hyperparameters, escalating jitter as needed.
    pub fn with_kernel(x: &[Vec<f64>], y: &[f64], kernel: Kernel) -> Result<Self> {
        check_training(x, y)?;
        let (chol, eps) = factor(x, kernel.family, kernel.r2, kernel.r1).ok_or_else(|| {
            Error::Fit(format!(
                "Gram matrix not positive definite for {kernel:?} even with jitter {JITTER_MAX} r1"
            ))
        })?;
        Ok(Self::assemble(x, y, kernel, eps, chol))
    }

    /// Rebuilds a fitted process from persisted parts with the stored jitter.
    pub fn from_parts(x: Vec<Vec<f64>>, y: Vec<f64>, kernel: Kernel, jitter: f64) -> Result<Self> {
        check_training(&x, &y)?;
        let g = correlation_matrix(&x, kernel.family, kernel.r2, jitter) * kernel.r1;
        let chol = Cholesky::new(g)
            .ok_or_else(|| Error::Fit("stored GP no longer factorizes".into()))?;
        Ok(Self::assemble(&x, &y, kernel, jitter, chol))
    }

    fn assemble(x: &[Vec<f64>], y: &[f64], kernel: Kernel, jitter: f64, chol: Cholesky<f64, Dyn>) -> Self {
        let k = y.len();
        let mean = y.iter().sum::<f64>() / k as f64;
        let yc = DVector::from_iterator(k, y.iter().map(|v| v - mean));
        let alpha = chol.solve(&yc);
        let l = chol.l();
        let logdet = 2.0 * (0..k).map(|i| l[(i, i)].ln()).sum::<f64>();
        let log_likelihood =
            -0.5 * yc.dot(&alpha) - 0.5 * logdet - 0.5 * k as f64 * std::f64::consts::TAU.ln();
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            kernel,
            jitter,
            mean,
            chol: l,
            alpha,
            log_likelihood,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Diagonal jitter relative to `r1` actually used.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Correlation used at prediction time: the jitter belongs to the
    /// kernel at zero distance, so design points are reproduced exactly.
    /// Distances below 1e-10 (unit coordinates) count as zero to absorb
    /// round trips through physical units.
    #[inline]
    fn corr(&self, d2: f64) -> f64 {
        if d2 <= 1e-20 {
            1.0 + self.jitter
        } else {
            self.kernel.family.correlation_sq(d2, self.kernel.r2)
        }
    }

    fn cross(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| self.kernel.r1 * self.corr(sq_dist(u, xi))),
        )
    }

    /// Posterior mean from precomputed squared distances to the design.
    pub fn mean_from_sq_dists(&self, d2: &[f64]) -> f64 {
        self.mean
            + self.kernel.r1
                * d2
                    .iter()
                    .zip(self.alpha.iter())
                    .map(|(d, a)| self.corr(*d) * a)
                    .sum::<f64>()
    }

    pub fn predict_mean(&self, u: &[f64]) -> f64 {
        self.mean + self.cross(u).dot(&self.alpha)
    }

    pub fn predict(&self, u: &[f64]) -> Prediction {
        let ks = self.cross(u);
        let mean = self.mean + ks.dot(&self.alpha);
        let v = self
            .chol
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a nonzero diagonal");
        let variance = (self.kernel.r1 * (1.0 + self.jitter) - v.norm_squared()).max(0.0);
        Prediction {
            mean,
            variance,
            extrapolating: u.iter().any(|c| !(0.0..=1.0).contains(c)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoocvRecord {
    pub index: usize,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    /// The fit without this point failed; `mean` and `sd` are NaN.
    pub failed: bool,
}

/// Leave-one-out cross validation with a full refit per held-out point.
pub fn loocv(x: &[Vec<f64>], y: &[f64], family: KernelFamily) -> Result<Vec<LoocvRecord>> {
    check_training(x, y)?;
    if x.len() < 3 {
        return Err(Error::invalid("LOOCV needs K >= 3"));
    }
    Ok((0..x.len())
        .into_par_iter()
        .map(|i| {
            let xs: Vec<Vec<f64>> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| p.clone()).collect();
            let ys: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
            match GaussianProcess::fit(&xs, &ys, family) {
                Ok(gp) => {
                    let p = gp.predict(&x[i]);
                    LoocvRecord { index: i, truth: y[i], mean: p.mean, sd: p.sd(), failed: false }
                }
                Err(e) => {
                    log::warn!("LOOCV fit without point {i} failed: {e}");
                    LoocvRecord { index: i, truth: y[i], mean: f64::NAN, sd: f64::NAN, failed: true }
                }
            }
        })
        .collect())
}

/// Coefficient of determination over the successful records.
pub fn r_squared(records: &[LoocvRecord]) -> f64 {
    let ok: Vec<&LoocvRecord> = records.iter().filter(|r| !r.failed).collect();
    let n = ok.len() as f64;
    let mean = ok.iter().map(|r| r.truth).sum::<f64>() / n;
    let ss_tot: f64 = ok.iter().map(|r| (r.truth - mean).powi(2)).sum();
    let ss_res: f64 = ok.iter().map(|r| (r.truth - r.mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
