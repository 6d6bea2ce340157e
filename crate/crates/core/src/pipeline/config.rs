use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::{McmcSettings, PostSettings};
use crate::doe::ParamBox;
use crate::error::{Error, Result};
use crate::forward::site::GridSize;
use crate::gp::KernelFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Number of design points.
    pub k: usize,
    pub iterations: usize,
    pub swarm: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            k: 64,
            iterations: 10_000,
            swarm: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// `0.99` prior quantile as a multiple of the engineering estimate.
    pub tau: f64,
    /// Engineering estimates (ton/yr), one per source.
    pub q_eng: Vec<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            tau: 3.0,
            q_eng: vec![35.0, 80.0, 5.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Explicit candidate variances; overrides `snr_span`.
    pub candidates: Option<Vec<f64>>,
    /// Default candidates are log-spaced so that the implied SNR runs
    /// between these two values.
    pub snr_span: [f64; 2],
    pub count: usize,
    pub delta: f64,
    /// Chain length per candidate.
    pub steps: usize,
    /// Noise variance for `invert` when no calibration result is given.
    pub lambda: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            candidates: None,
            snr_span: [30.0, 0.3],
            count: 6,
            delta: 0.5,
            steps: 100_000,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub theta: Vec<f64>,
    /// Rates in ton/yr.
    pub q: Vec<f64>,
    /// Target signal-to-noise ratio; ignored when `lambda` is set.
    pub snr: f64,
    pub lambda: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            theta: vec![0.3, 0.1, -300.0],
            q: vec![35.0, 80.0, 5.0, 5.0],
            snr: 3.0,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub k: usize,
    pub iterations: usize,
    pub samples: usize,
    pub threshold: f64,
    pub families: Vec<KernelFamily>,
    /// Coarser grid for the screening runs.
    pub grid: Option<GridSize>,
    pub wind_bins: Option<usize>,
    pub bounds: Option<ParamBox>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            k: 64,
            iterations: 1000,
            samples: 4096,
            threshold: 0.1,
            families: KernelFamily::ALL.to_vec(),
            grid: Some(GridSize {
                nx: 16,
                ny: 16,
                nz: 12,
            }),
            wind_bins: Some(8),
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub taus: Vec<f64>,
    pub ks: Vec<usize>,
    pub replicates: usize,
    /// Chain length per study run.
    pub steps: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            taus: vec![2.0, 3.0, 4.0],
            ks: vec![16, 32, 64],
            replicates: 5,
            steps: 1_000_000,
        }
    }
}

/// Everything a pipeline run needs. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Site TOML; the bundled synthetic site when absent.
    pub site: Option<PathBuf>,
    /// Wind CSV `t_s,speed_mps,dir_rad`; a synthetic record when absent.
    pub wind: Option<PathBuf>,
    /// Sampling interval of the synthetic wind record (s).
    pub wind_step: f64,
    /// Measurements CSV `receptor,w` for `calibrate-noise` and `invert`.
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Emulator box for `(p, z0, L)`.
    pub bounds: ParamBox,
    pub kernel: KernelFamily,
    pub design: DesignConfig,
    pub prior: PriorConfig,
    pub mcmc: McmcSettings,
    pub post: PostSettings,
    pub noise: NoiseConfig,
    pub synthetic: SyntheticConfig,
    pub sensitivity: SensitivityConfig,
    pub studies: StudyConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            site: None,
            wind: None,
            wind_step: 3600.0,
            data: None,
            seed: None,
            out: PathBuf::from("out"),
            bounds: ParamBox::calibration(),
            kernel: KernelFamily::SquaredExponential,
            design: DesignConfig::default(),
            prior: PriorConfig::default(),
            mcmc: McmcSettings::default(),
            post: PostSettings::default(),
            noise: NoiseConfig::default(),
            synthetic: SyntheticConfig::default(),
            sensitivity: SensitivityConfig::default(),
            studies: StudyConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("no seed: set `seed` in the config or pass --seed".into()))
    }

    /// Checks ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.master_seed()?;
        self.bounds.validate()?;
        for p in [&self.site, &self.wind, &self.data].into_iter().flatten() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::Config(format!("file not found: {}", full.display())));
            }
        }
        if self.design.k < 8 {
            return Err(Error::Config(format!("design size K = {} is below 8", self.design.k)));
        }
        if self.prior.q_eng.iter().any(|q| !(*q > 0.0)) {
            return Err(Error::Config("engineering estimates must be > 0".into()));
        }
        if !(self.prior.tau > 1.0) {
            return Err(Error::Config("prior tau must be > 1".into()));
        }
        if !(self.wind_step > 0.0) {
            return Err(Error::Config("wind_step must be > 0".into()));
        }
        self.mcmc.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            seed = 7
            kernel = "matern52"
            [design]
            k = 32
            [mcmc]
            steps = 1000
            [noise]
            candidates = [1e-6, 1e-5, 1e-4]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.kernel, KernelFamily::Matern52);
        assert_eq!(cfg.design.k, 32);
        assert_eq!(cfg.design.iterations, 10_000);
        assert_eq!(cfg.mcmc.steps, 1000);
        assert_eq!(cfg.mcmc.beta, 0.05);
        assert_eq!(cfg.prior.q_eng, vec![35.0, 80.0, 5.0, 5.0]);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_missing_files() {
        assert!(PipelineConfig::from_toml_str("sede = 1").is_err());
        let cfg = PipelineConfig::from_toml_str("seed = 1\nsite = \"nope.toml\"").unwrap();
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let cfg = PipelineConfig::from_toml_str("[design]\nk = 4").unwrap();
        assert!(cfg.validate().is_err());
    }
}
