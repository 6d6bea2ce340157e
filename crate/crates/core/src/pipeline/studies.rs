use serde::{Deserialize, Serialize};

use super::synth::{add_noise, clean_signal, Measurements};
use super::{files, write_json, Pipeline};
use crate::bayes::{self, kde_density, InferenceSummary, PRIOR_QUANTILE};
use crate::error::{Error, Result};
use crate::gp::EmulatedMatrix;
use crate::seed;

/// One inversion in the prior-spread study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorStudyRun {
    pub replicate: usize,
    pub tau: f64,
    pub estimate: Vec<f64>,
    pub radius: Vec<f64>,
    pub summary: InferenceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorStudy {
    pub taus: Vec<f64>,
    /// `[tau][source]` prior quantile at `PRIOR_QUANTILE`.
    pub prior_quantiles: Vec<Vec<f64>>,
    pub quantiles_increasing: bool,
    pub runs: Vec<PriorStudyRun>,
    /// Per replicate: q1 and q2 radii are nondecreasing in tau.
    pub radii_nondecreasing: Vec<bool>,
}

impl PriorStudy {
    pub fn monotone_replicates(&self) -> usize {
        self.radii_nondecreasing.iter().filter(|b| **b).count()
    }
}

/// One emulator size in the emulator study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorStudyRun {
    pub k: usize,
    pub summary: InferenceSummary,
    /// `[source]` density of `q_j / q_eng_j` on `grid[source]`.
    pub densities: Vec<Vec<f64>>,
    /// `[source]` sup-norm distance to the largest emulator's density.
    pub distance: Vec<f64>,
    pub max_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorStudy {
    pub reference_k: usize,
    /// `[source]` evaluation points in units of `q_eng_j`.
    pub grid: Vec<Vec<f64>>,
    pub runs: Vec<EmulatorStudyRun>,
}

impl EmulatorStudy {
    pub fn distance_for(&self, k: usize) -> Option<f64> {
        self.runs.iter().find(|r| r.k == k).map(|r| r.max_distance)
    }
}

const KDE_POINTS: usize = 256;

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

impl Pipeline {
    fn study_settings(&self) -> crate::bayes::McmcSettings {
        self.config.mcmc.with_steps(self.config.studies.steps)
    }

    /// Inverts `replicates` noisy copies of `clean` for each prior spread.
    /// Chains for one replicate share a seed across spreads.
    pub fn study_prior(
        &self,
        emulator: &EmulatedMatrix,
        clean: &[f64],
        lambda: f64,
        taus: &[f64],
        replicates: usize,
    ) -> Result<PriorStudy> {
        if taus.is_empty() || replicates == 0 {
            return Err(Error::invalid("prior study needs spreads and replicates"));
        }
        let mut taus = taus.to_vec();
        taus.sort_by(f64::total_cmp);
        let prior_quantiles = taus
            .iter()
            .map(|&t| {
                Ok(self
                    .prior(t)?
                    .sources
                    .iter()
                    .map(|g| g.quantile(PRIOR_QUANTILE))
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let quantiles_increasing = prior_quantiles
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b > a));
        let receptors = emulator.receptors.clone();
        let mcmc = self.study_settings();
        let mut runs = Vec::new();
        let mut radii_nondecreasing = Vec::new();
        for r in 0..replicates {
            let values = add_noise(clean, lambda, seed::indexed_seed(self.seed(), "study-prior-noise", r as u64))?;
            let data = Measurements::new(receptors.clone(), values)?;
            let chain_seed = seed::indexed_seed(self.seed(), "study-prior", r as u64);
            let mut r1 = Vec::new();
            let mut r2 = Vec::new();
            for &tau in &taus {
                let problem = self.problem(emulator, &data, lambda, tau)?;
                let inv = bayes::invert(&problem, &mcmc, &self.config.post, chain_seed)?;
                let s = inv.summary;
                let (i1, i2) = (s.index("q1"), s.index("q2"));
                if let (Some(i1), Some(i2)) = (i1, i2) {
                    r1.push(s.radius[i1]);
                    r2.push(s.radius[i2]);
                }
                runs.push(PriorStudyRun {
                    replicate: r,
                    tau,
                    estimate: s.estimate.clone(),
                    radius: s.radius.clone(),
                    summary: s,
                });
            }
            radii_nondecreasing.push(nondecreasing(&r1) && nondecreasing(&r2));
        }
        Ok(PriorStudy {
            taus,
            prior_quantiles,
            quantiles_increasing,
            runs,
            radii_nondecreasing,
        })
    }

    pub fn cmd_study_prior(&self, emulator: &EmulatedMatrix, taus: &[f64]) -> Result<PriorStudy> {
        let syn = &self.config.synthetic;
        let clean = clean_signal(&self.site, &self.wind, &syn.theta, &syn.q)?;
        let lambda = self.synthetic_lambda(&clean)?;
        let study = self.study_prior(emulator, &clean, lambda, taus, self.config.studies.replicates)?;
        write_json(self.output(files::STUDY_PRIOR)?, &study)?;
        Ok(study)
    }

    /// Inverts the same data with each emulator and compares the q marginal
    /// densities with those of the largest one. Rates are scaled by their
    /// engineering estimates so the sup-norm distances of different sources
    /// are comparable.
    pub fn study_emulator(
        &self,
        emulators: &[(usize, &EmulatedMatrix)],
        data: &Measurements,
        lambda: f64,
    ) -> Result<EmulatorStudy> {
        let (reference_k, _) = *emulators
            .iter()
            .max_by_key(|(k, _)| *k)
            .ok_or_else(|| Error::invalid("emulator study needs emulators"))?;
        let mcmc = self.study_settings();
        let chain_seed = seed::child_seed(self.seed(), "study-emulator");
        let mut inversions = Vec::new();
        for (k, em) in emulators {
            let problem = self.problem(em, data, lambda, self.config.prior.tau)?;
            inversions.push((*k, bayes::invert(&problem, &mcmc, &self.config.post, chain_seed)?));
        }
        let nt = self.config.bounds.dim();
        let q_eng = &self.config.prior.q_eng;
        let ns = q_eng.len();
        let scaled = |inv: &bayes::Inversion, j: usize| -> Vec<f64> {
            inv.samples.column(nt + j).iter().map(|q| q / q_eng[j]).collect()
        };
        let grid: Vec<Vec<f64>> = (0..ns)
            .map(|j| {
                let hi = inversions
                    .iter()
                    .flat_map(|(_, inv)| scaled(inv, j))
                    .fold(0.0, f64::max);
                (0..KDE_POINTS)
                    .map(|i| hi * i as f64 / (KDE_POINTS - 1) as f64)
                    .collect()
            })
            .collect();
        let densities: Vec<Vec<Vec<f64>>> = inversions
            .iter()
            .map(|(_, inv)| {
                (0..ns)
                    .map(|j| kde_density(&scaled(inv, j), &grid[j]))
                    .collect()
            })
            .collect();
        let reference = inversions
            .iter()
            .position(|(k, _)| *k == reference_k)
            .expect("reference is one of the runs");
        let runs = inversions
            .into_iter()
            .zip(&densities)
            .map(|((k, inv), dens)| {
                let distance: Vec<f64> = (0..ns)
                    .map(|j| {
                        dens[j]
                            .iter()
                            .zip(&densities[reference][j])
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0, f64::max)
                    })
                    .collect();
                EmulatorStudyRun {
                    k,
                    summary: inv.summary,
                    densities: dens.clone(),
                    max_distance: distance.iter().copied().fold(0.0, f64::max),
                    distance,
                }
            })
            .collect();
        Ok(EmulatorStudy {
            reference_k,
            grid,
            runs,
        })
    }

    /// Builds one emulator per size and runs [`Pipeline::study_emulator`]
    /// on synthetic data from the configured truth.
    pub fn cmd_study_emulator(&self, ks: &[usize]) -> Result<EmulatorStudy> {
        if ks.iter().any(|k| *k < 8) {
            return Err(Error::Config("emulator sizes must be >= 8".into()));
        }
        let mut emulators = Vec::new();
        for &k in ks {
            let design = self.make_design(k, &format!("design-{k}"))?;
            let snaps = self.run_snapshots(&design)?;
            emulators.push((k, crate::gp::emulate_matrix(&design, &snaps, self.config.kernel)?));
        }
        let syn = &self.config.synthetic;
        let clean = clean_signal(&self.site, &self.wind, &syn.theta, &syn.q)?;
        let lambda = self.synthetic_lambda(&clean)?;
        let values = add_noise(&clean, lambda, seed::child_seed(self.seed(), "study-emulator-noise"))?;
        let data = Measurements::new(emulators[0].1.receptors.clone(), values)?;
        let refs: Vec<(usize, &EmulatedMatrix)> = emulators.iter().map(|(k, e)| (*k, e)).collect();
        let study = self.study_emulator(&refs, &data, lambda)?;
        write_json(self.output(files::STUDY_EMULATOR)?, &study)?;
        Ok(study)
    }
}
