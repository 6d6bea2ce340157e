use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelFamily};
use super::process::{sq_dist, GaussianProcess};
use crate::doe::{DesignSet, ParamBox};
use crate::error::{Error, Result};
use crate::forward::SourceReceptorMatrix;
use crate::hexfloat;

/// Emulator for one matrix entry.
#[derive(Debug, Clone)]
pub enum EntryModel {
    Gp(GaussianProcess),
    /// Fallback when no GP could be fitted: value of the closest design point.
    Nearest(Vec<f64>),
}

/// Result of evaluating the emulated matrix at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmulatedPrediction {
    /// Row-major `d x n` entries after clamping.
    pub entries: Vec<f64>,
    /// Number of entries whose GP mean was negative and clamped to 0.
    pub clamped: usize,
    /// Largest magnitude removed by clamping.
    pub max_clamp: f64,
    pub in_box: bool,
}

/// One emulator per source-receptor entry, all sharing one design.
#[derive(Debug, Clone)]
pub struct EmulatedMatrix {
    pub bounds: ParamBox,
    pub receptors: Vec<String>,
    pub sources: Vec<String>,
    pub family: KernelFamily,
    design: Vec<Vec<f64>>,
    models: Vec<EntryModel>,
}

/// Fits `d * n` emulators over the design. Entries whose fit fails fall back
/// to nearest-neighbour lookup.
pub fn emulate_matrix(
    design: &DesignSet,
    snapshots: &[SourceReceptorMatrix],
    family: KernelFamily,
) -> Result<EmulatedMatrix> {
    if snapshots.len() != design.k() {
        return Err(Error::invalid(format!(
            "{} snapshots for {} design points",
            snapshots.len(),
            design.k()
        )));
    }
    let first = snapshots
        .first()
        .ok_or_else(|| Error::invalid("no snapshots"))?;
    if snapshots
        .iter()
        .any(|s| s.receptors != first.receptors || s.sources != first.sources)
    {
        return Err(Error::invalid("snapshots disagree on receptor/source labels"));
    }
    let entries = first.entries.len();
    let models = (0..entries)
        .into_par_iter()
        .map(|e| {
            let y: Vec<f64> = snapshots.iter().map(|s| s.entries[e]).collect();
            match GaussianProcess::fit(&design.points, &y, family) {
                Ok(gp) => EntryModel::Gp(gp),
                Err(err) => {
                    log::warn!("entry {e}: {err}; using nearest-neighbour lookup");
                    EntryModel::Nearest(y)
                }
            }
        })
        .collect();
    Ok(EmulatedMatrix {
        bounds: design.bounds.clone(),
        receptors: first.receptors.clone(),
        sources: first.sources.clone(),
        family,
        design: design.points.clone(),
        models,
    })
}

impl EmulatedMatrix {
    pub fn n_receptors(&self) -> usize {
        self.receptors.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_emulators(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[EntryModel] {
        &self.models
    }

    pub fn fallback_count(&self) -> usize {
        self.models
            .iter()
            .filter(|m| matches!(m, EntryModel::Nearest(_)))
            .count()
    }

    /// Emulated matrix at physical parameters `theta`, negative means clamped to 0.
    pub fn predict(&self, theta: &[f64]) -> EmulatedPrediction {
        let mut entries = vec![0.0; self.models.len()];
        let (clamped, max_clamp, in_box) = self.predict_into(theta, &mut entries);
        EmulatedPrediction {
            entries,
            clamped,
            max_clamp,
            in_box,
        }
    }

    /// Allocation-free variant; returns `(clamped, max_clamp, in_box)`.
    pub fn predict_into(&self, theta: &[f64], out: &mut [f64]) -> (usize, f64, bool) {
        let u = self.bounds.to_unit(theta);
        let d2: Vec<f64> = self.design.iter().map(|x| sq_dist(&u, x)).collect();
        let mut clamped = 0;
        let mut max_clamp = 0.0f64;
        for (o, model) in out.iter_mut().zip(&self.models) {
            let v = match model {
                EntryModel::Gp(gp) => gp.mean_from_sq_dists(&d2),
                EntryModel::Nearest(y) => y[nearest(&d2)],
            };
            if v < 0.0 {
                clamped += 1;
                max_clamp = max_clamp.max(-v);
            }
            *o = v.max(0.0);
        }
        if clamped > 0 {
            log::trace!("clamped {clamped} negative emulated entries (max {max_clamp:e})");
        }
        (clamped, max_clamp, self.bounds.contains(theta))
    }

    /// Entry predictions with GP standard deviations (0 for fallbacks), unclamped.
    pub fn predict_with_sd(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        let u = self.bounds.to_unit(theta);
        let d2: Vec<f64> = self.design.iter().map(|x| sq_dist(&u, x)).collect();
        self.models
            .iter()
            .map(|m| match m {
                EntryModel::Gp(gp) => {
                    let p = gp.predict(&u);
                    (p.mean, p.sd())
                }
                EntryModel::Nearest(y) => (y[nearest(&d2)], 0.0),
            })
            .collect()
    }

    pub fn matrix_at(&self, theta: &[f64]) -> Result<SourceReceptorMatrix> {
        SourceReceptorMatrix::new(
            self.receptors.clone(),
            self.sources.clone(),
            self.predict(theta).entries,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Stored::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: Stored = serde_json::from_str(text)?;
        stored.into_matrix()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn nearest(d2: &[f64]) -> usize {
    d2.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i)
}

#[derive(Serialize, Deserialize)]
struct HexVec(#[serde(with = "hexfloat::serde_vec")] Vec<f64>);

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum StoredEntry {
    Gp {
        #[serde(with = "hexfloat::serde_vec")]
        values: Vec<f64>,
        #[serde(with = "hexfloat::serde_f64")]
        r1: f64,
        #[serde(with = "hexfloat::serde_f64")]
        r2: f64,
        #[serde(with = "hexfloat::serde_f64")]
        jitter: f64,
    },
    Nearest {
        #[serde(with = "hexfloat::serde_vec")]
        values: Vec<f64>,
    },
}

#[derive(Serialize, Deserialize)]
struct Stored {
    family: KernelFamily,
    bounds: ParamBox,
    receptors: Vec<String>,
    sources: Vec<String>,
    design: Vec<HexVec>,
    entries: Vec<StoredEntry>,
}

impl From<&EmulatedMatrix> for Stored {
    fn from(m: &EmulatedMatrix) -> Self {
        Stored {
            family: m.family,
            bounds: m.bounds.clone(),
            receptors: m.receptors.clone(),
            sources: m.sources.clone(),
            design: m.design.iter().map(|x| HexVec(x.clone())).collect(),
            entries: m
                .models
                .iter()
                .map(|e| match e {
                    EntryModel::Gp(gp) => StoredEntry::Gp {
                        values: gp.values().to_vec(),
                        r1: gp.kernel().r1,
                        r2: gp.kernel().r2,
                        jitter: gp.jitter(),
                    },
                    EntryModel::Nearest(v) => StoredEntry::Nearest { values: v.clone() },
                })
                .collect(),
        }
    }
}

impl Stored {
    fn into_matrix(self) -> Result<EmulatedMatrix> {
        self.bounds.validate()?;
        let design: Vec<Vec<f64>> = self.design.into_iter().map(|h| h.0).collect();
        if self.entries.len() != self.receptors.len() * self.sources.len() {
            return Err(Error::Config("emulator entry count does not match labels".into()));
        }
        let models = self
            .entries
            .into_iter()
            .map(|e| match e {
                StoredEntry::Gp {
                    values,
                    r1,
                    r2,
                    jitter,
                } => Ok(EntryModel::Gp(GaussianProcess::from_parts(
                    design.clone(),
                    values,
                    Kernel::new(self.family, r1, r2)?,
                    jitter,
                )?)),
                StoredEntry::Nearest { values } => {
                    if values.len() != design.len() {
                        return Err(Error::Config("fallback entry has wrong length".into()));
                    }
                    Ok(EntryModel::Nearest(values))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmulatedMatrix {
            bounds: self.bounds,
            receptors: self.receptors,
            sources: self.sources,
            family: self.family,
            design,
            models,
        })
    }
}
