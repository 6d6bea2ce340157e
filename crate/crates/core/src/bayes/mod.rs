//! Bayesian inversion: priors, likelihood, adaptive Metropolis-Hastings
//! sampling and posterior summaries.

mod likelihood;
mod mcmc;
mod prior;
mod summary;

pub use likelihood::{
    log_likelihood, log_likelihood_entries, InverseProblem, NoiseModel, SECONDS_PER_YEAR,
    TON_PER_YEAR,
};
pub use mcmc::{adaptive_mh, postprocess_chain, McmcSettings, PosteriorChain, SampleSet};
pub use prior::{gamma_from_mode_quantile, log_prior, GammaPrior, PriorSpec, PRIOR_QUANTILE};
pub use summary::{
    credible_interval, fit_gamma, gamma_mode, kde_density, kde_mode, point_estimates, silverman_bandwidth,
    InferenceSummary, MarginalFit,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Burn-in, thinning and credible mass applied after sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostSettings {
    pub burn_in: f64,
    pub thinning: usize,
    pub mass: f64,
}

impl Default for PostSettings {
    fn default() -> Self {
        Self {
            burn_in: 0.5,
            thinning: 10,
            mass: 0.68,
        }
    }
}

/// Chain, retained samples and summary of one inversion.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub chain: PosteriorChain,
    pub samples: SampleSet,
    pub summary: InferenceSummary,
}

/// Samples the posterior of `problem` and summarizes it.
///
/// The sampler runs on rescaled coordinates: model parameters mapped to the
/// unit box and rates divided by their engineering estimates, so the
/// isotropic proposal components see comparable scales. The map is linear,
/// so the target is unchanged up to a constant. Stored states are physical.
pub fn invert(
    problem: &InverseProblem<'_>,
    mcmc: &McmcSettings,
    post: &PostSettings,
    seed: u64,
) -> Result<Inversion> {
    let chain = sample_posterior(problem, mcmc, seed)?;
    let samples = postprocess_chain(&chain, post.burn_in, post.thinning)?;
    let summary = summarize(problem, &chain, &samples, post.mass)?;
    Ok(Inversion {
        chain,
        samples,
        summary,
    })
}

/// Chain in physical coordinates `(theta, q)`.
pub fn sample_posterior(
    problem: &InverseProblem<'_>,
    mcmc: &McmcSettings,
    seed: u64,
) -> Result<PosteriorChain> {
    let prior = &problem.prior;
    let nt = prior.n_theta();
    let lo = prior.bounds.lower.clone();
    let width: Vec<f64> = prior
        .bounds
        .lower
        .iter()
        .zip(&prior.bounds.upper)
        .map(|(l, u)| u - l)
        .collect();
    let scale = prior.q_eng.clone();
    let to_physical = move |z: &[f64], x: &mut [f64]| {
        for i in 0..nt {
            x[i] = lo[i] + z[i] * width[i];
        }
        for (j, s) in scale.iter().enumerate() {
            x[nt + j] = z[nt + j] * s;
        }
    };
    let mut scratch = vec![0.0; problem.emulator.n_emulators()];
    let mut x = vec![0.0; problem.dim()];
    let target = |z: &[f64]| {
        to_physical(z, &mut x);
        problem.log_posterior_with(&x, &mut scratch)
    };
    // Centre of the emulator's box in theta, engineering estimates in q.
    let theta0 = problem.emulator.bounds.to_physical(&vec![0.5; nt]);
    let mut init: Vec<f64> = prior.bounds.to_unit(&theta0);
    init.extend(std::iter::repeat_n(1.0, prior.n_sources()));
    let mut chain = adaptive_mh(target, &init, mcmc, seed)?;
    let mut buf = vec![0.0; problem.dim()];
    chain.map_states(|s| {
        to_physical(s, &mut buf);
        s.copy_from_slice(&buf);
    });
    chain.names = prior.names();
    Ok(chain)
}

/// Point estimates with gamma fits for the rates and density fits for the
/// model parameters; adds MAP and maximum-likelihood samples.
pub fn summarize(
    problem: &InverseProblem<'_>,
    chain: &PosteriorChain,
    samples: &SampleSet,
    mass: f64,
) -> Result<InferenceSummary> {
    let prior = &problem.prior;
    let mut fits = vec![MarginalFit::Density; prior.n_theta()];
    fits.extend(std::iter::repeat_n(MarginalFit::Gamma, prior.n_sources()));
    let mut support: Vec<(f64, f64)> = prior
        .bounds
        .lower
        .iter()
        .zip(&prior.bounds.upper)
        .map(|(l, u)| (*l, *u))
        .collect();
    support.extend(std::iter::repeat_n((0.0, f64::INFINITY), prior.n_sources()));
    let mut summary = point_estimates(samples, &fits, &support, mass)?;
    let mut scratch = vec![0.0; problem.emulator.n_emulators()];
    summary.ml = samples
        .rows()
        .map(|r| problem.log_likelihood_with(r, &mut scratch))
        .enumerate()
        .filter(|(_, l)| l.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| samples.row(i).to_vec());
    summary.acceptance_rate = Some(chain.acceptance_rate());
    Ok(summary)
}
