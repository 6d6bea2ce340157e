use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Adaptive Metropolis-Hastings settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Chain length including the initial state.
    pub steps: usize,
    /// Weight of the fixed isotropic component in the proposal mixture.
    pub beta: f64,
    /// Isotropic variance (times `1/dim`) during the first `2 dim` steps.
    pub gamma1: f64,
    /// Scale (times `1/dim`) of the empirical covariance.
    pub gamma2: f64,
    /// Isotropic variance (times `1/dim`) of the mixture's safety component.
    pub gamma3: f64,
    /// Ridge added to the empirical covariance before factorization.
    pub regularizer: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            steps: 1_000_000,
            beta: 0.05,
            gamma1: 0.01,
            gamma2: 2.38 * 2.38,
            gamma3: 0.1 * 0.1,
            regularizer: 1e-10,
        }
    }
}

impl McmcSettings {
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.gamma1, self.gamma2, self.gamma3]
            .iter()
            .all(|g| *g > 0.0 && g.is_finite());
        if self.steps == 0 || !(0.0..1.0).contains(&self.beta) || self.beta <= 0.0 || !positive {
            return Err(Error::invalid(format!("bad MCMC settings: {self:?}")));
        }
        if !(self.regularizer >= 0.0) {
            return Err(Error::invalid("regularizer must be >= 0"));
        }
        Ok(())
    }
}

/// States visited by the sampler. Rejected steps repeat the previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChain {
    pub names: Vec<String>,
    pub dim: usize,
    /// Row-major `steps x dim`.
    pub states: Vec<f64>,
    pub accepted: Vec<bool>,
    pub log_post: Vec<f64>,
    /// Proposals whose log density was NaN or `+inf`.
    pub non_finite: usize,
    /// Empirical covariance after the last step.
    pub covariance: Vec<f64>,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    /// Accepted fraction of the `steps - 1` proposals.
    pub fn acceptance_rate(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let moves = self.accepted[1..].iter().filter(|a| **a).count();
        moves as f64 / (self.len() - 1) as f64
    }

    /// Applies `f` to every state, e.g. to map sampler coordinates to
    /// physical ones.
    pub fn map_states(&mut self, mut f: impl FnMut(&mut [f64])) {
        for s in self.states.chunks_exact_mut(self.dim) {
            f(s);
        }
    }

    /// CSV `step,accepted,logpost,<names>`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        write!(out, "step,accepted,logpost").map_err(io)?;
        for n in &self.names {
            write!(out, ",{n}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        for i in 0..self.len() {
            write!(out, "{},{},{}", i + 1, u8::from(self.accepted[i]), self.log_post[i]).map_err(io)?;
            for v in self.state(i) {
                write!(out, ",{v}").map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.len() < 4 || &headers[0] != "step" || &headers[2] != "logpost" {
            return Err(Error::Config(format!("{}: not a chain file", path.display())));
        }
        let names: Vec<String> = headers.iter().skip(3).map(String::from).collect();
        let dim = names.len();
        let mut chain = PosteriorChain {
            names,
            dim,
            states: Vec::new(),
            accepted: Vec::new(),
            log_post: Vec::new(),
            non_finite: 0,
            covariance: vec![0.0; dim * dim],
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: bad number `{s}`: {e}", path.display())))
        };
        for rec in rdr.records() {
            let rec = rec?;
            chain.accepted.push(&rec[1] == "1");
            chain.log_post.push(parse(&rec[2])?);
            for v in rec.iter().skip(3) {
                chain.states.push(parse(v)?);
            }
        }
        Ok(chain)
    }
}

/// Running mean and scatter matrix (Welford).
struct RunningCovariance {
    n: usize,
    mean: Vec<f64>,
    scatter: Vec<f64>,
}

impl RunningCovariance {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            scatter: vec![0.0; dim * dim],
        }
    }

    fn push(&mut self, x: &[f64], delta: &mut [f64]) {
        self.n += 1;
        let dim = x.len();
        for i in 0..dim {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / self.n as f64;
        }
        for i in 0..dim {
            let after = x[i] - self.mean[i];
            for j in 0..dim {
                self.scatter[i * dim + j] += after * delta[j];
            }
        }
    }

    fn covariance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.scatter.iter().map(|s| s / denom).collect()
    }
}

/// In-place lower Cholesky factor of a row-major SPD matrix.
fn cholesky(a: &mut [f64], dim: usize) -> bool {
    for j in 0..dim {
        let mut d = a[j * dim + j];
        for k in 0..j {
            d -= a[j * dim + k] * a[j * dim + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * dim + j] = d;
        for i in j + 1..dim {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= a[i * dim + k] * a[j * dim + k];
            }
            a[i * dim + j] = s / d;
        }
        for k in j + 1..dim {
            a[j * dim + k] = 0.0;
        }
    }
    true
}

/// Adaptive random-walk Metropolis-Hastings.
///
/// For the first `2 dim` steps the increment is `N(0, gamma1/dim I)`; after
/// that it is drawn from the mixture
/// `(1 - beta) N(0, gamma2/dim Sigma_j) + beta N(0, gamma3/dim I)` with
/// `Sigma_j` the empirical covariance of the chain so far.
pub fn adaptive_mh<F>(
    mut log_post: F,
    init: &[f64],
    settings: &McmcSettings,
    seed: u64,
) -> Result<PosteriorChain>
where
    F: FnMut(&[f64]) -> f64,
{
    settings.validate()?;
    let dim = init.len();
    if dim == 0 {
        return Err(Error::invalid("empty initial state"));
    }
    let lp0 = log_post(init);
    if !lp0.is_finite() {
        return Err(Error::invalid(format!(
            "initial state has log density {lp0}; it must lie in the support"
        )));
    }
    let n = settings.steps;
    let mut rng = seed::rng(seed);
    let mut states = Vec::with_capacity(n * dim);
    let mut accepted = Vec::with_capacity(n);
    let mut log_posts = Vec::with_capacity(n);
    states.extend_from_slice(init);
    accepted.push(true);
    log_posts.push(lp0);

    let mut running = RunningCovariance::new(dim);
    let mut delta = vec![0.0; dim];
    running.push(init, &mut delta);

    let mut current = init.to_vec();
    let mut lp = lp0;
    let mut proposal = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    let mut factor = vec![0.0; dim * dim];
    let mut non_finite = 0;
    let iso1 = (settings.gamma1 / dim as f64).sqrt();
    let iso3 = (settings.gamma3 / dim as f64).sqrt();
    let scale2 = settings.gamma2 / dim as f64;

    for j in 2..=n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let adaptive = j > 2 * dim && rng.random::<f64>() >= settings.beta;
        if adaptive {
            let cov = running.covariance();
            let mut ridge = settings.regularizer;
            loop {
                for (f, c) in factor.iter_mut().zip(&cov) {
                    *f = scale2 * c;
                }
                for i in 0..dim {
                    factor[i * dim + i] += ridge;
                }
                if cholesky(&mut factor, dim) {
                    break;
                }
                ridge = if ridge > 0.0 { ridge * 10.0 } else { 1e-12 };
            }
            for i in 0..dim {
                let step: f64 = (0..=i).map(|k| factor[i * dim + k] * z[k]).sum();
                proposal[i] = current[i] + step;
            }
        } else {
            let s = if j <= 2 * dim { iso1 } else { iso3 };
            for i in 0..dim {
                proposal[i] = current[i] + s * z[i];
            }
        }
        let lp_new = log_post(&proposal);
        let u: f64 = rng.random();
        let accept = if lp_new.is_nan() || lp_new == f64::INFINITY {
            non_finite += 1;
            false
        } else {
            u < (lp_new - lp).exp()
        };
        if accept {
            current.copy_from_slice(&proposal);
            lp = lp_new;
        }
        states.extend_from_slice(&current);
        accepted.push(accept);
        log_posts.push(lp);
        running.push(&current, &mut delta);
    }
    if non_finite > 0 {
        log::warn!("{non_finite} proposals had a non-finite log density and were rejected");
    }
    Ok(PosteriorChain {
        names: (1..=dim).map(|i| format!("x{i}")).collect(),
        dim,
        states,
        accepted,
        log_post: log_posts,
        non_finite,
        covariance: running.covariance(),
    })
}

/// Retained draws after burn-in and thinning, row-major `n x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub names: Vec<String>,
    pub dim: usize,
    pub values: Vec<f64>,
    pub log_post: Vec<f64>,
}

impl SampleSet {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = names.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("sample rows disagree with the names"));
        }
        Ok(Self {
            names,
            dim,
            values: rows.concat(),
            log_post: vec![f64::NAN; rows.len()],
        })
    }

    pub fn len(&self) -> usize {
        self.log_post.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_post.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }
}

/// Drops the first `floor(burn_in * N)` states and keeps every `thinning`-th
/// state after that.
pub fn postprocess_chain(
    chain: &PosteriorChain,
    burn_in: f64,
    thinning: usize,
) -> Result<SampleSet> {
    if !(0.0..1.0).contains(&burn_in) || thinning == 0 {
        return Err(Error::invalid(format!(
            "burn-in must be in [0, 1) and thinning >= 1 (got {burn_in}, {thinning})"
        )));
    }
    let start = (burn_in * chain.len() as f64).floor() as usize;
    let keep: Vec<usize> = (start..chain.len()).step_by(thinning).collect();
    if keep.is_empty() {
        return Err(Error::invalid("no samples left after burn-in and thinning"));
    }
    let mut values = Vec::with_capacity(keep.len() * chain.dim);
    for &i in &keep {
        values.extend_from_slice(chain.state(i));
    }
    Ok(SampleSet {
        names: chain.names.clone(),
        dim: chain.dim,
        values,
        log_post: keep.iter().map(|&i| chain.log_post[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn dummy(n: usize) -> PosteriorChain {
        PosteriorChain {
            names: vec!["a".into()],
            dim: 1,
            states: (0..n).map(|i| i as f64).collect(),
            accepted: vec![true; n],
            log_post: vec![0.0; n],
            non_finite: 0,
            covariance: vec![0.0],
        }
    }

    #[test]
    fn burn_in_and_thinning_counts() {
        assert_eq!(postprocess_chain(&dummy(100), 0.5, 10).unwrap().len(), 5);
        assert_eq!(postprocess_chain(&dummy(1_000_000), 0.5, 10).unwrap().len(), 50_000);
        let all = postprocess_chain(&dummy(37), 0.0, 1).unwrap();
        assert_eq!(all.values, dummy(37).states);
        assert!(postprocess_chain(&dummy(0), 0.5, 10).is_err());
    }

    #[test]
    fn flat_target_accepts_every_move() {
        let chain = adaptive_mh(|_| 0.0, &[0.0; 3], &McmcSettings::default().with_steps(500), 1).unwrap();
        assert!(chain.accepted.iter().all(|a| *a));
        assert_eq!(chain.acceptance_rate(), 1.0);
    }

    #[test]
    fn zero_density_states_are_never_visited() {
        let lp = |x: &[f64]| if x[0] >= 0.0 { -0.5 * x[0] * x[0] } else { f64::NEG_INFINITY };
        let chain = adaptive_mh(lp, &[0.5], &McmcSettings::default().with_steps(20_000), 2).unwrap();
        assert!(chain.states.iter().all(|&x| x >= 0.0));
        assert!(chain.log_post.iter().all(|l| l.is_finite()));
        let nan = adaptive_mh(|x| if x[0] > 1.0 { f64::NAN } else { 0.0 }, &[0.0], &McmcSettings::default().with_steps(5000), 3).unwrap();
        assert!(nan.non_finite > 0);
        assert!(nan.states.iter().all(|&x| x <= 1.0));
    }

    #[test]
    fn initial_state_must_be_supported() {
        let r = adaptive_mh(|_| f64::NEG_INFINITY, &[0.0], &McmcSettings::default(), 0);
        assert!(r.is_err());
    }

    #[test]
    fn same_seed_same_chain() {
        let lp = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let s = McmcSettings::default().with_steps(3000);
        let a = adaptive_mh(lp, &[0.1, 0.2], &s, 11).unwrap();
        let b = adaptive_mh(lp, &[0.1, 0.2], &s, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn piecewise_constant_target_passes_chi_squared() {
        let weights = [1.0, 2.0, 3.0, 2.0, 1.0];
        let total: f64 = weights.iter().sum();
        let lp = |x: &[f64]| {
            if (0.0..5.0).contains(&x[0]) {
                weights[x[0] as usize].ln()
            } else {
                f64::NEG_INFINITY
            }
        };
        let chain = adaptive_mh(lp, &[2.5], &McmcSettings::default().with_steps(400_000), 5).unwrap();
        // Thinning far beyond the integrated autocorrelation time.
        let samples = postprocess_chain(&chain, 0.1, 100).unwrap();
        let mut counts = [0.0; 5];
        for x in samples.column(0) {
            counts[x as usize] += 1.0;
        }
        let n = samples.len() as f64;
        let chi2: f64 = counts
            .iter()
            .zip(&weights)
            .map(|(o, w)| {
                let e = n * w / total;
                (o - e) * (o - e) / e
            })
            .sum();
        let critical = ChiSquared::new(4.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "chi2 = {chi2} vs {critical}");
    }

    #[test]
    fn standard_normal_moments_in_seven_dimensions() {
        let lp = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let chain = adaptive_mh(lp, &[0.0; 7], &McmcSettings::default().with_steps(200_000), 21).unwrap();
        let s = postprocess_chain(&chain, 0.5, 1).unwrap();
        for c in 0..7 {
            let x = s.column(c);
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            assert!(m.abs() < 0.05 && (v - 1.0).abs() < 0.1, "coordinate {c}: mean {m}, var {v}");
        }
        let rate = chain.acceptance_rate();
        assert!(rate > 0.1 && rate < 0.5, "{rate}");
    }

    #[test]
    fn chain_csv_round_trip() {
        let lp = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let mut chain = adaptive_mh(lp, &[0.1, 0.2], &McmcSettings::default().with_steps(200), 4).unwrap();
        chain.names = vec!["p".into(), "q1".into()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        chain.write_csv(&path).unwrap();
        let back = PosteriorChain::read_csv(&path).unwrap();
        assert_eq!(back.states, chain.states);
        assert_eq!(back.accepted, chain.accepted);
        assert_eq!(back.log_post, chain.log_post);
        assert_eq!(back.names, chain.names);
    }
}
