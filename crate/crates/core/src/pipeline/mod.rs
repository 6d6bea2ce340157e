//! End-to-end orchestration: design, snapshots, emulator training and
//! validation, screening, synthetic data, noise calibration, inversion and
//! the prior-spread and emulator-size studies.

mod config;
mod report;
mod studies;
mod synth;

pub use config::{
    DesignConfig, NoiseConfig, PipelineConfig, PriorConfig, SensitivityConfig, StudyConfig,
    SyntheticConfig,
};
pub use studies::{EmulatorStudy, EmulatorStudyRun, PriorStudy, PriorStudyRun};
pub use synth::{add_noise, clean_signal, synthesize, synthesize_from_clean, Measurements, SyntheticData};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, InverseProblem, Inversion, NoiseModel, PriorSpec, TON_PER_YEAR};
use crate::doe::{particle_swarm_maximin, DesignSet, ParamBox};
use crate::error::{Error, Result};
use crate::forward::{source_receptor_matrix, ModelParams, SiteConfig, SourceReceptorMatrix, WindRecord};
use crate::gp::{emulate_matrix, loocv, r_squared, EmulatedMatrix, LoocvRecord};
use crate::noise_cal::{self, LambdaCalibration, NoiseCalSettings};
use crate::seed;
use crate::sensitivity::{screen_parameters, ScreeningReport, ScreeningSettings};

/// File names inside the output directory.
pub mod files {
    pub const DESIGN: &str = "design.csv";
    pub const SNAPSHOTS: &str = "snapshots";
    pub const EMULATOR: &str = "emulator.json";
    pub const LOOCV: &str = "loocv.csv";
    pub const LOOCV_SUMMARY: &str = "loocv.json";
    pub const SENSITIVITY: &str = "sensitivity.csv";
    pub const SENSITIVITY_SUMMARY: &str = "sensitivity.json";
    pub const DATA: &str = "data.csv";
    pub const SYNTHETIC: &str = "synthetic.json";
    pub const NOISE: &str = "noise.csv";
    pub const NOISE_SUMMARY: &str = "noise.json";
    pub const CHAIN: &str = "chain.csv";
    pub const SUMMARY: &str = "summary.json";
    pub const STUDY_PRIOR: &str = "study_prior.json";
    pub const STUDY_EMULATOR: &str = "study_emulator.json";
    pub const REPORT: &str = "report.md";
}

/// LOOCV of the receptor maps `w_i(theta) = A_i(theta) q_eng`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub receptors: Vec<String>,
    pub records: Vec<(String, LoocvRecord)>,
    pub r_squared: f64,
    pub per_receptor: Vec<(String, f64)>,
}

impl ValidationReport {
    pub fn write(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["receptor", "index", "truth", "mean", "sd", "failed"])?;
        for (r, rec) in &self.records {
            w.write_record([
                r.clone(),
                rec.index.to_string(),
                rec.truth.to_string(),
                rec.mean.to_string(),
                rec.sd.to_string(),
                rec.failed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        write_json(json_path, self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loaded configuration, site and wind record.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub site: SiteConfig,
    pub wind: WindRecord,
    seed: u64,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.master_seed()?;
        let site = match &config.site {
            Some(p) => SiteConfig::read(config.resolve(p))?,
            None => SiteConfig::trail_like(),
        };
        if config.prior.q_eng.len() != site.n_sources() {
            return Err(Error::Config(format!(
                "{} engineering estimates for {} sources",
                config.prior.q_eng.len(),
                site.n_sources()
            )));
        }
        let wind = match &config.wind {
            Some(p) => WindRecord::read_csv(config.resolve(p))?,
            None => WindRecord::synthetic(site.window, config.wind_step, seed::child_seed(seed, "wind"))?,
        };
        wind.check_covers(site.window)?;
        Ok(Self {
            config,
            site,
            wind,
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Default measurement-noise seed for `cmd_synthesize`.
    pub fn synthesis_seed(&self) -> u64 {
        seed::child_seed(self.seed, "synthesize")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.config.out_dir()
    }

    /// Path of `name` inside the output directory, created on demand.
    pub fn output(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir.join(name))
    }

    fn params(theta: &[f64]) -> ModelParams {
        ModelParams::new(theta[0], theta[1], theta[2])
    }

    /// Maximin design of size `k` over the emulator box.
    pub fn make_design(&self, k: usize, label: &str) -> Result<DesignSet> {
        let d = &self.config.design;
        particle_swarm_maximin(
            k,
            self.config.bounds.dim(),
            d.iterations,
            d.swarm,
            seed::child_seed(self.seed, label),
        )?
        .with_bounds(self.config.bounds.clone())
    }

    pub fn cmd_design(&self) -> Result<DesignSet> {
        let design = self.make_design(self.config.design.k, "design")?;
        design.write(self.output(files::DESIGN)?)?;
        Ok(design)
    }

    /// Source-receptor matrices at every design point, run concurrently.
    pub fn run_snapshots(&self, design: &DesignSet) -> Result<Vec<SourceReceptorMatrix>> {
        if design.dim() != 3 {
            return Err(Error::invalid("snapshots need a (p, z0, L) design"));
        }
        design
            .physical()
            .par_iter()
            .map(|theta| source_receptor_matrix(&Self::params(theta), &self.site, &self.wind))
            .collect()
    }

    pub fn cmd_snapshot(&self, design: &DesignSet) -> Result<Vec<SourceReceptorMatrix>> {
        let snaps = self.run_snapshots(design)?;
        let dir = self.output(files::SNAPSHOTS)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, s) in snaps.iter().enumerate() {
            s.write_csv(dir.join(format!("snapshot_{k:04}.csv")))?;
        }
        Ok(snaps)
    }

    pub fn read_snapshots(&self, k: usize) -> Result<Vec<SourceReceptorMatrix>> {
        let dir = self.out_dir().join(files::SNAPSHOTS);
        (0..k)
            .map(|i| SourceReceptorMatrix::read_csv(dir.join(format!("snapshot_{i:04}.csv"))))
            .collect()
    }

    pub fn cmd_train(
        &self,
        design: &DesignSet,
        snapshots: &[SourceReceptorMatrix],
    ) -> Result<EmulatedMatrix> {
        let em = emulate_matrix(design, snapshots, self.config.kernel)?;
        if em.fallback_count() > 0 {
            log::warn!("{} entries use nearest-neighbour fallback", em.fallback_count());
        }
        em.write(self.output(files::EMULATOR)?)?;
        Ok(em)
    }

    /// Receptor maps `A_i(theta) q_eng` (kg) at each snapshot.
    fn receptor_maps(&self, snapshots: &[SourceReceptorMatrix]) -> Vec<(String, Vec<f64>)> {
        let q: Vec<f64> = self.config.prior.q_eng.iter().map(|v| v * TON_PER_YEAR).collect();
        let d = snapshots.first().map_or(0, SourceReceptorMatrix::n_receptors);
        (0..d)
            .map(|i| {
                let values = snapshots.iter().map(|s| s.apply(&q)[i]).collect();
                (snapshots[0].receptors[i].clone(), values)
            })
            .collect()
    }

    pub fn validate_emulator(
        &self,
        design: &DesignSet,
        snapshots: &[SourceReceptorMatrix],
    ) -> Result<ValidationReport> {
        if snapshots.len() != design.k() {
            return Err(Error::invalid("one snapshot per design point"));
        }
        let mut records = Vec::new();
        let mut per_receptor = Vec::new();
        for (label, values) in self.receptor_maps(snapshots) {
            let recs = loocv(&design.points, &values, self.config.kernel)?;
            per_receptor.push((label.clone(), r_squared(&recs)));
            records.extend(recs.into_iter().map(|r| (label.clone(), r)));
        }
        let all: Vec<LoocvRecord> = records.iter().map(|(_, r)| *r).collect();
        Ok(ValidationReport {
            receptors: per_receptor.iter().map(|(l, _)| l.clone()).collect(),
            r_squared: r_squared(&all),
            per_receptor,
            records,
        })
    }

    pub fn cmd_validate(
        &self,
        design: &DesignSet,
        snapshots: &[SourceReceptorMatrix],
    ) -> Result<ValidationReport> {
        let report = self.validate_emulator(design, snapshots)?;
        report.write(self.output(files::LOOCV)?, self.output(files::LOOCV_SUMMARY)?)?;
        Ok(report)
    }

    /// Screening of `(p, z0, L, z_i, z_cut)` on the (coarser) screening site.
    pub fn sensitivity(&self) -> Result<ScreeningReport> {
        let cfg = &self.config.sensitivity;
        let bounds = cfg.bounds.clone().unwrap_or_else(ParamBox::screening);
        if bounds.names != ["p", "z0", "L", "z_i", "z_cut"] {
            return Err(Error::Config("screening box must be (p, z0, L, z_i, z_cut)".into()));
        }
        let mut site = self.site.clone();
        if let Some(g) = cfg.grid {
            site.grid = g;
        }
        if cfg.wind_bins.is_some() {
            site.solver.wind_bins = cfg.wind_bins;
        }
        let design = particle_swarm_maximin(
            cfg.k,
            bounds.dim(),
            cfg.iterations,
            self.config.design.swarm,
            seed::child_seed(self.seed, "screening-design"),
        )?
        .with_bounds(bounds.clone())?;
        let snaps: Vec<SourceReceptorMatrix> = design
            .physical()
            .par_iter()
            .map(|x| {
                let params = ModelParams::new(x[0], x[1], x[2])
                    .with_mixing_height(x[3])
                    .with_cut_height(x[4]);
                source_receptor_matrix(&params, &site, &self.wind)
            })
            .collect::<Result<_>>()?;
        let settings = ScreeningSettings {
            families: cfg.families.clone(),
            samples: cfg.samples,
            threshold: cfg.threshold,
            ..ScreeningSettings::default()
        };
        screen_parameters(
            &design.points,
            &bounds.names,
            &self.receptor_maps(&snaps),
            &settings,
            seed::child_seed(self.seed, "screening"),
        )
    }

    pub fn cmd_sensitivity(&self) -> Result<ScreeningReport> {
        let report = self.sensitivity()?;
        report.write(
            self.output(files::SENSITIVITY)?,
            self.output(files::SENSITIVITY_SUMMARY)?,
        )?;
        Ok(report)
    }

    /// Noise variance for the configured synthetic truth: explicit, or from
    /// the target SNR applied to the noise-free signal.
    pub fn synthetic_lambda(&self, clean: &[f64]) -> Result<f64> {
        match self.config.synthetic.lambda {
            Some(l) => Ok(l),
            None => noise_cal::lambda_for_snr(clean, self.config.synthetic.snr),
        }
    }

    /// Measurements from the full solver at the configured (or given) truth.
    pub fn cmd_synthesize(
        &self,
        theta: Option<&[f64]>,
        q: Option<&[f64]>,
        lambda: Option<f64>,
        seed: u64,
    ) -> Result<SyntheticData> {
        let syn = &self.config.synthetic;
        let theta = theta.unwrap_or(&syn.theta);
        let q = q.unwrap_or(&syn.q);
        if !ParamBox::prior().contains(theta) {
            return Err(Error::invalid(format!("true parameters {theta:?} outside the prior box")));
        }
        let clean = clean_signal(&self.site, &self.wind, theta, q)?;
        let lambda = match lambda {
            Some(l) => l,
            None => self.synthetic_lambda(&clean)?,
        };
        let data = synthesize_from_clean(&self.site, theta, q, clean, lambda, seed)?;
        data.data.write_csv(self.output(files::DATA)?)?;
        write_json(self.output(files::SYNTHETIC)?, &data)?;
        Ok(data)
    }

    pub fn prior(&self, tau: f64) -> Result<PriorSpec> {
        PriorSpec::new(ParamBox::prior(), &self.config.prior.q_eng, tau)
    }

    pub fn problem<'a>(
        &self,
        emulator: &'a EmulatedMatrix,
        data: &Measurements,
        lambda: f64,
        tau: f64,
    ) -> Result<InverseProblem<'a>> {
        if data.receptors != emulator.receptors {
            return Err(Error::invalid("measurement receptors do not match the emulator"));
        }
        InverseProblem::new(emulator, data.values.clone(), NoiseModel::new(lambda)?, self.prior(tau)?)
    }

    /// Default candidates: log-spaced so the implied SNR spans the configured range.
    pub fn lambda_candidates(&self, data: &Measurements) -> Result<Vec<f64>> {
        let n = &self.config.noise;
        if let Some(c) = &n.candidates {
            return Ok(c.clone());
        }
        let a = noise_cal::lambda_for_snr(&data.values, n.snr_span[0])?;
        let b = noise_cal::lambda_for_snr(&data.values, n.snr_span[1])?;
        noise_cal::log_spaced(a.min(b), a.max(b), n.count)
    }

    pub fn calibrate_noise(
        &self,
        emulator: &EmulatedMatrix,
        data: &Measurements,
    ) -> Result<LambdaCalibration> {
        let candidates = self.lambda_candidates(data)?;
        if candidates.len() < 3 {
            return Err(Error::Config("need at least 3 noise candidates".into()));
        }
        // The noise model is replaced per candidate; this one only seeds the problem.
        let problem = self.problem(emulator, data, candidates[0], self.config.prior.tau)?;
        let settings = NoiseCalSettings {
            delta: self.config.noise.delta,
            mcmc: self.config.mcmc.with_steps(self.config.noise.steps),
            post: self.config.post,
        };
        noise_cal::calibrate_lambda(
            &problem,
            &candidates,
            &settings,
            seed::child_seed(self.seed, "noise"),
        )
    }

    pub fn cmd_calibrate_noise(
        &self,
        emulator: &EmulatedMatrix,
        data: &Measurements,
    ) -> Result<LambdaCalibration> {
        let cal = self.calibrate_noise(emulator, data)?;
        cal.write(self.output(files::NOISE)?, self.output(files::NOISE_SUMMARY)?)?;
        Ok(cal)
    }

    /// Posterior sampling with the configured prior spread and chain settings.
    pub fn invert(
        &self,
        emulator: &EmulatedMatrix,
        data: &Measurements,
        lambda: f64,
        seed: u64,
    ) -> Result<Inversion> {
        let problem = self.problem(emulator, data, lambda, self.config.prior.tau)?;
        bayes::invert(&problem, &self.config.mcmc, &self.config.post, seed)
    }

    pub fn cmd_invert(
        &self,
        emulator: &EmulatedMatrix,
        data: &Measurements,
        lambda: f64,
    ) -> Result<Inversion> {
        let inv = self.invert(emulator, data, lambda, seed::child_seed(self.seed, "mcmc"))?;
        inv.chain.write_csv(self.output(files::CHAIN)?)?;
        inv.summary.write_json(self.output(files::SUMMARY)?)?;
        Ok(inv)
    }

    /// Noise variance for `invert`: explicit value, then the calibration
    /// result in the output directory, then the config.
    pub fn resolve_lambda(&self, explicit: Option<f64>) -> Result<f64> {
        if let Some(l) = explicit {
            return Ok(l);
        }
        let path = self.out_dir().join(files::NOISE_SUMMARY);
        if path.is_file() {
            let cal: LambdaCalibration = read_json(&path)?;
            return Ok(cal.lambda_star);
        }
        self.config.noise.lambda.ok_or_else(|| {
            Error::Config("no noise variance: pass --lambda, run calibrate-noise or set noise.lambda".into())
        })
    }

    /// Measurements from `config.data`, else the synthesized file in the output directory.
    pub fn load_data(&self) -> Result<Measurements> {
        match &self.config.data {
            Some(p) => Measurements::read_csv(self.config.resolve(p)),
            None => Measurements::read_csv(self.out_dir().join(files::DATA)),
        }
    }

    pub fn load_design(&self) -> Result<DesignSet> {
        DesignSet::read(self.out_dir().join(files::DESIGN))
    }

    pub fn load_emulator(&self) -> Result<EmulatedMatrix> {
        EmulatedMatrix::read(self.out_dir().join(files::EMULATOR))
    }
}
