//! Sobol total-effect indices and parameter screening over GP surrogates.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use crate::doe::ParamBox;
use crate::error::{Error, Result};
use crate::gp::{GaussianProcess, KernelFamily};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalIndices {
    pub totals: Vec<f64>,
    /// Output variance over the combined base samples.
    pub variance: f64,
    /// Output variance was zero; all totals are reported as 0.
    pub degenerate: bool,
}

/// Jansen total-effect estimator over `N (m + 2)` evaluations of `f`.
///
/// The two base matrices are the first and last `m` coordinates of a
/// `2m`-dimensional Sobol' sequence with a seeded random shift (mod 1),
/// scaled to `bounds`.
pub fn sobol_total_indices<F>(f: F, bounds: &ParamBox, n: usize, seed: u64) -> Result<TotalIndices>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    bounds.validate()?;
    if n < 64 {
        return Err(Error::invalid("Sobol estimation needs N >= 64 base samples"));
    }
    let m = bounds.dim();
    let params = JoeKuoD6::minimal();
    let mut rng = seed::rng(seed);
    let shift: Vec<f64> = (0..2 * m).map(|_| rng.random()).collect();
    let points: Vec<Vec<f64>> = Sobol::<f64>::new(2 * m, &params)
        .skip(1)
        .take(n)
        .map(|p| {
            p.iter()
                .zip(&shift)
                .map(|(u, s)| (u + s).fract())
                .collect()
        })
        .collect();
    if points.len() < n {
        return Err(Error::invalid("Sobol sequence exhausted"));
    }
    let a: Vec<Vec<f64>> = points.iter().map(|p| bounds.to_physical(&p[..m])).collect();
    let b: Vec<Vec<f64>> = points.iter().map(|p| bounds.to_physical(&p[m..])).collect();

    let fa: Vec<f64> = a.par_iter().map(|x| f(x)).collect();
    let fb: Vec<f64> = b.par_iter().map(|x| f(x)).collect();
    if fa.iter().chain(&fb).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite model output in Sobol sample".into()));
    }
    let all = fa.iter().chain(&fb);
    let mean = all.clone().sum::<f64>() / (2 * n) as f64;
    let variance = all.map(|v| (v - mean).powi(2)).sum::<f64>() / (2 * n - 1) as f64;
    // Zero up to roundoff of the mean.
    if !(variance > (1e3 * f64::EPSILON * mean).powi(2)) {
        return Ok(TotalIndices {
            totals: vec![0.0; m],
            variance,
            degenerate: true,
        });
    }

    let totals = (0..m)
        .map(|i| {
            let mixed: Vec<f64> = a
                .par_iter()
                .zip(&b)
                .map(|(xa, xb)| {
                    let mut x = xa.clone();
                    x[i] = xb[i];
                    f(&x)
                })
                .collect();
            let s: f64 = fa.iter().zip(&mixed).map(|(p, q)| (p - q).powi(2)).sum();
            s / (2.0 * n as f64) / variance
        })
        .collect();
    Ok(TotalIndices {
        totals,
        variance,
        degenerate: false,
    })
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Boxplot summary; whiskers are clipped to the data range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
}

impl BoxStats {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("boxplot needs finite values"));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let (q1, median, q3) = (
            quantile_sorted(&s, 0.25),
            quantile_sorted(&s, 0.5),
            quantile_sorted(&s, 0.75),
        );
        let (min, max) = (s[0], s[s.len() - 1]);
        let iqr = q3 - q1;
        Ok(Self {
            min,
            q1,
            median,
            q3,
            max,
            iqr,
            lower_whisker: min.max(q1 - 1.5 * iqr),
            upper_whisker: max.min(q3 + 1.5 * iqr),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSettings {
    pub families: Vec<KernelFamily>,
    /// Base sample count per index estimate.
    pub samples: usize,
    /// Parameters with a median total index below this are fixed.
    pub threshold: f64,
    /// `(a, b)`: keep `b` whenever `a` is kept.
    pub couplings: Vec<(String, String)>,
}

impl Default for ScreeningSettings {
    fn default() -> Self {
        Self {
            families: KernelFamily::ALL.to_vec(),
            samples: 4096,
            threshold: 0.1,
            couplings: vec![("z0".into(), "L".into())],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub receptor: String,
    pub parameter: String,
    pub kernel: KernelFamily,
    pub total_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterStats {
    pub receptor: String,
    pub parameter: String,
    pub stats: BoxStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub parameter: String,
    /// Median over every (receptor, kernel) index.
    pub median_total: f64,
    pub keep: bool,
    /// Kept only because a coupled parameter is kept.
    pub kept_by_coupling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub parameters: Vec<String>,
    pub records: Vec<IndexRecord>,
    pub stats: Vec<ParameterStats>,
    pub verdict: Vec<Verdict>,
    /// `(receptor, kernel)` surrogates that could not be fitted.
    pub failed: Vec<(String, KernelFamily)>,
}

impl ScreeningReport {
    pub fn kept(&self) -> Vec<&str> {
        self.verdict
            .iter()
            .filter(|v| v.keep)
            .map(|v| v.parameter.as_str())
            .collect()
    }

    /// Parameters ordered by decreasing median total index.
    pub fn ranking(&self) -> Vec<&str> {
        let mut v: Vec<&Verdict> = self.verdict.iter().collect();
        v.sort_by(|a, b| b.median_total.total_cmp(&a.median_total));
        v.into_iter().map(|v| v.parameter.as_str()).collect()
    }

    /// CSV `receptor,parameter,kernel,total_index` plus a JSON file with the
    /// boxplot statistics and the verdict.
    pub fn write(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["receptor", "parameter", "kernel", "total_index"])?;
        for r in &self.records {
            w.write_record(&[
                r.receptor.clone(),
                r.parameter.clone(),
                r.kernel.to_string(),
                r.total_index.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let json_path = json_path.as_ref();
        std::fs::write(json_path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(json_path, e))
    }
}

/// Screens parameters of scalar maps sampled on a design.
///
/// `design` holds unit-cube points, `maps` one `(label, values at design)`
/// pair per receptor map. For every map and kernel family a GP surrogate is
/// fitted and its mean is used to estimate total indices over the unit cube.
pub fn screen_parameters(
    design: &[Vec<f64>],
    names: &[String],
    maps: &[(String, Vec<f64>)],
    settings: &ScreeningSettings,
    seed: u64,
) -> Result<ScreeningReport> {
    let m = names.len();
    if design.is_empty() || design.iter().any(|p| p.len() != m) {
        return Err(Error::invalid("design dimension does not match parameter names"));
    }
    if settings.families.is_empty() {
        return Err(Error::invalid("screening needs at least one kernel family"));
    }
    let unit = ParamBox::unit(m);
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (map_index, (label, values)) in maps.iter().enumerate() {
        for &family in &settings.families {
            let gp = match GaussianProcess::fit(design, values, family) {
                Ok(gp) => gp,
                Err(e) => {
                    log::warn!("surrogate for {label} with {family} kernel failed: {e}");
                    failed.push((label.clone(), family));
                    continue;
                }
            };
            let s = seed::indexed_seed(seed, "sobol", map_index as u64);
            let idx = sobol_total_indices(|u| gp.predict_mean(u), &unit, settings.samples, s)?;
            for (name, t) in names.iter().zip(&idx.totals) {
                records.push(IndexRecord {
                    receptor: label.clone(),
                    parameter: name.clone(),
                    kernel: family,
                    total_index: *t,
                });
            }
        }
    }

    let mut stats = Vec::new();
    for (label, _) in maps {
        for name in names {
            let s: Vec<f64> = records
                .iter()
                .filter(|r| &r.receptor == label && &r.parameter == name)
                .map(|r| r.total_index)
                .collect();
            if !s.is_empty() {
                stats.push(ParameterStats {
                    receptor: label.clone(),
                    parameter: name.clone(),
                    stats: BoxStats::new(&s)?,
                });
            }
        }
    }

    let mut verdict: Vec<Verdict> = names
        .iter()
        .map(|name| {
            let s: Vec<f64> = records
                .iter()
                .filter(|r| &r.parameter == name)
                .map(|r| r.total_index)
                .collect();
            let median_total = if s.is_empty() {
                f64::NAN
            } else {
                BoxStats::new(&s).map_or(f64::NAN, |b| b.median)
            };
            Verdict {
                parameter: name.clone(),
                median_total,
                keep: !(median_total < settings.threshold),
                kept_by_coupling: false,
            }
        })
        .collect();
    for (a, b) in &settings.couplings {
        let a_kept = verdict.iter().any(|v| &v.parameter == a && v.keep);
        if let Some(vb) = verdict.iter_mut().find(|v| &v.parameter == b) {
            if a_kept && !vb.keep {
                vb.keep = true;
                vb.kept_by_coupling = true;
            }
        }
    }

    Ok(ScreeningReport {
        parameters: names.to_vec(),
        records,
        stats,
        verdict,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::latin_hypercube;
    use std::f64::consts::PI;

    fn ishigami(x: &[f64]) -> f64 {
        x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
    }

    /// Total indices of the Ishigami function from its variance decomposition.
    fn ishigami_oracle(a: f64, b: f64) -> [f64; 3] {
        let pi4 = PI.powi(4);
        let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
        let v = v1 + v2 + v13;
        [(v1 + v13) / v, v2 / v, v13 / v]
    }

    #[test]
    fn ishigami_totals() {
        let oracle = ishigami_oracle(7.0, 0.1);
        assert!((oracle[0] - 0.5576).abs() < 1e-4);
        assert!((oracle[1] - 0.4424).abs() < 1e-4);
        assert!((oracle[2] - 0.2437).abs() < 1e-4);
        let b = ParamBox::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
            vec![-PI; 3],
            vec![PI; 3],
        )
        .unwrap();
        let t = sobol_total_indices(ishigami, &b, 16384, 3).unwrap();
        for (est, exact) in t.totals.iter().zip(oracle) {
            assert!((est - exact).abs() < 0.05, "{est} vs {exact}");
        }
    }

    #[test]
    fn single_variable_and_constant() {
        let b = ParamBox::unit(3);
        let t = sobol_total_indices(|x| x[0], &b, 4096, 1).unwrap();
        assert!((t.totals[0] - 1.0).abs() < 0.05);
        for t in &t.totals[1..] {
            assert!(t.abs() < 3.0 / 4096f64.sqrt());
        }
        let c = sobol_total_indices(|_| 4.2, &b, 128, 1).unwrap();
        assert!(c.degenerate && c.totals.iter().all(|&v| v == 0.0));
        assert!(sobol_total_indices(|x| x[0], &b, 32, 1).is_err());
    }

    #[test]
    fn box_stats_against_direct_quartiles() {
        let eq = BoxStats::new(&[0.3; 4]).unwrap();
        assert_eq!((eq.iqr, eq.lower_whisker, eq.upper_whisker), (0.0, 0.3, 0.3));
        // Type 7 on {0.1, 0.2, 0.4, 1.5}: Q1 at h = 0.75, Q3 at h = 2.25.
        let b = BoxStats::new(&[0.4, 0.1, 1.5, 0.2]).unwrap();
        assert!((b.q1 - 0.175).abs() < 1e-15);
        assert!((b.median - 0.3).abs() < 1e-15);
        assert!((b.q3 - 0.675).abs() < 1e-15);
        assert!(b.upper_whisker <= b.max && b.lower_whisker >= b.min);
        // E3 + 1.5 IQR = 0.675 + 0.75 falls below the maximum.
        assert!((b.upper_whisker - 1.425).abs() < 1e-15);
        assert_eq!(b.lower_whisker, 0.1);
    }

    #[test]
    fn screening_drops_unused_parameter() {
        let names: Vec<String> = ["p", "z0", "L", "z_i", "z_cut"].iter().map(|s| s.to_string()).collect();
        let d = latin_hypercube(40, 5, 17).unwrap();
        let maps: Vec<(String, Vec<f64>)> = (0..3)
            .map(|r| {
                let v = d
                    .points
                    .iter()
                    .map(|x| (1.0 + r as f64) * x[0] + (2.0 * x[1]).sin() + 0.3 * x[2] * x[1] + 0.1 * x[3])
                    .collect();
                (format!("R{}", r + 1), v)
            })
            .collect();
        let settings = ScreeningSettings { samples: 1024, ..Default::default() };
        let rep = screen_parameters(&d.points, &names, &maps, &settings, 5).unwrap();
        assert_eq!(rep.records.len(), 3 * 4 * 5);
        let zc = rep.verdict.iter().find(|v| v.parameter == "z_cut").unwrap();
        assert!(zc.median_total < 0.05 && !zc.keep);
        assert!(rep.kept().contains(&"p") && rep.kept().contains(&"z0"));
        for s in &rep.stats {
            assert!(s.stats.upper_whisker <= s.stats.max && s.stats.lower_whisker >= s.stats.min);
        }
    }
}
