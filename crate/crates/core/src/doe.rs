//! Space-filling designs: Latin hypercubes refined by a particle swarm that
//! maximizes the smallest pairwise distance.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Axis-aligned box with named axes, mapping `[0,1]^m` to physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self {
            names,
            lower,
            upper,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.names.len();
        if m == 0 || self.lower.len() != m || self.upper.len() != m {
            return Err(Error::invalid("parameter box needs matching names and bounds"));
        }
        for ((n, lo), hi) in self.names.iter().zip(&self.lower).zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad range for {n}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn unit(m: usize) -> Self {
        Self {
            names: (1..=m).map(|i| format!("theta_{i}")).collect(),
            lower: vec![0.0; m],
            upper: vec![1.0; m],
        }
    }

    /// Design box for `(p, z0, L)`. The roughness length and the
    /// Monin-Obukhov length are kept away from 0, where the closures are
    /// singular.
    pub fn calibration() -> Self {
        Self {
            names: vec!["p".into(), "z0".into(), "L".into()],
            lower: vec![0.0, 0.01, -600.0],
            upper: vec![0.6, 3.0, -1.0],
        }
    }

    /// Uniform prior support for `(p, z0, L)`.
    pub fn prior() -> Self {
        Self {
            names: vec!["p".into(), "z0".into(), "L".into()],
            lower: vec![0.0, 0.0, -600.0],
            upper: vec![0.6, 3.0, 0.0],
        }
    }

    /// Five-parameter screening box `(p, z0, L, z_i, z_cut)`.
    pub fn screening() -> Self {
        Self {
            names: vec!["p".into(), "z0".into(), "L".into(), "z_i".into(), "z_cut".into()],
            lower: vec![0.0, 0.01, -600.0, 50.0, 0.5],
            upper: vec![0.6, 3.0, -1.0, 500.0, 5.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn to_physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| (x - lo) / (hi - lo))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| (*lo..=*hi).contains(x))
    }
}

/// K design points stored in unit coordinates together with their box.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    pub points: Vec<Vec<f64>>,
    pub bounds: ParamBox,
    pub seed: u64,
    pub iterations: usize,
    /// Best score after each swarm iteration (entry 0 is the initializer).
    pub trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    bounds: ParamBox,
    score: Option<f64>,
    seed: u64,
    iterations: usize,
    k: usize,
}

impl DesignSet {
    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn score(&self) -> Result<f64> {
        maximin_score(&self.points)
    }

    /// Re-labels the unit design with a physical box of the same dimension.
    pub fn with_bounds(mut self, bounds: ParamBox) -> Result<Self> {
        bounds.validate()?;
        if bounds.dim() != self.dim() {
            return Err(Error::invalid("box dimension does not match the design"));
        }
        self.bounds = bounds;
        Ok(self)
    }

    pub fn physical(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|u| self.bounds.to_physical(u)).collect()
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// `k,theta_1..theta_m` in physical units plus a JSON sidecar.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("theta_{i}")));
        w.write_record(&header)?;
        for (k, x) in self.physical().iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let side = Sidecar {
            bounds: self.bounds.clone(),
            score: self.score().ok(),
            seed: self.seed,
            iterations: self.iterations,
            k: self.k(),
        };
        let sp = Self::sidecar_path(path);
        std::fs::write(&sp, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(sp, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let sp = Self::sidecar_path(path);
        let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        side.bounds.validate()?;
        let m = side.bounds.dim();
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != m + 1 {
                return Err(Error::Config(format!(
                    "{}: expected {} columns, found {}",
                    path.display(),
                    m + 1,
                    rec.len()
                )));
            }
            let x = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!("{}: bad number `{v}`", path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if !side.bounds.contains(&x) {
                return Err(Error::Config(format!(
                    "{}: design point {x:?} outside its box",
                    path.display()
                )));
            }
            points.push(side.bounds.to_unit(&x));
        }
        if points.len() != side.k {
            return Err(Error::Config(format!(
                "{}: sidecar says {} points, CSV has {}",
                path.display(),
                side.k,
                points.len()
            )));
        }
        Ok(Self {
            points,
            bounds: side.bounds,
            seed: side.seed,
            iterations: side.iterations,
            trace: Vec::new(),
        })
    }
}

/// Random Latin hypercube in `[0,1]^m`: each axis has one point per stratum
/// `[s/K, (s+1)/K)`.
pub fn latin_hypercube(k: usize, m: usize, seed: u64) -> Result<DesignSet> {
    if k == 0 || m == 0 {
        return Err(Error::invalid("Latin hypercube needs K >= 1 and m >= 1"));
    }
    let mut rng = seed::rng(seed);
    let mut points = vec![vec![0.0; m]; k];
    let mut strata: Vec<usize> = (0..k).collect();
    for axis in 0..m {
        strata.shuffle(&mut rng);
        for (p, &s) in points.iter_mut().zip(&strata) {
            let mut x = (s as f64 + rng.random::<f64>()) / k as f64;
            let top = (s + 1) as f64 / k as f64;
            while x >= top {
                x = x.next_down();
            }
            p[axis] = x;
        }
    }
    Ok(DesignSet {
        points,
        bounds: ParamBox::unit(m),
        seed,
        iterations: 0,
        trace: Vec::new(),
    })
}

/// Smallest pairwise Euclidean distance.
pub fn maximin_score(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("maximin score needs at least two points"));
    }
    Ok(min_distance_sq(points.iter().map(Vec::as_slice), points.len()).sqrt())
}

fn min_distance_sq<'a>(points: impl Iterator<Item = &'a [f64]> + Clone, k: usize) -> f64 {
    let pts: Vec<&[f64]> = points.take(k).collect();
    let mut best = f64::INFINITY;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let d: f64 = pts[a].iter().zip(pts[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.min(d);
        }
    }
    best
}

/// Score of a flattened `K x m` particle.
fn particle_score(flat: &[f64], m: usize) -> f64 {
    let k = flat.len() / m;
    min_distance_sq(flat.chunks(m), k).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmSettings {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-coordinate velocity bound.
    pub max_velocity: f64,
}

impl Default for SwarmSettings {
    fn default() -> Self {
        Self {
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            max_velocity: 0.25,
        }
    }
}

pub fn particle_swarm_maximin(
    k: usize,
    m: usize,
    iterations: usize,
    swarm_size: usize,
    seed: u64,
) -> Result<DesignSet> {
    particle_swarm_maximin_with(k, m, iterations, swarm_size, seed, &SwarmSettings::default())
}

/// Global-best particle swarm over flattened designs, started from a Latin
/// hypercube. Ties keep the incumbent.
pub fn particle_swarm_maximin_with(
    k: usize,
    m: usize,
    iterations: usize,
    swarm_size: usize,
    seed: u64,
    settings: &SwarmSettings,
) -> Result<DesignSet> {
    if swarm_size == 0 {
        return Err(Error::invalid("swarm size must be at least 1"));
    }
    if k < 2 {
        return Err(Error::invalid("maximin design needs K >= 2"));
    }
    let init = latin_hypercube(k, m, seed::child_seed(seed, "lhd"))?;
    let flat_init: Vec<f64> = init.points.concat();
    let n = flat_init.len();
    let mut rng = seed::rng(seed::child_seed(seed, "swarm"));

    let mut positions = vec![flat_init.clone()];
    for i in 1..swarm_size {
        let extra = latin_hypercube(k, m, seed::indexed_seed(seed, "particle", i as u64))?;
        positions.push(extra.points.concat());
    }
    let vmax = settings.max_velocity;
    let mut velocities: Vec<Vec<f64>> = (0..swarm_size)
        .map(|_| (0..n).map(|_| vmax * (2.0 * rng.random::<f64>() - 1.0)).collect())
        .collect();
    let mut best_pos = positions.clone();
    let mut best_score: Vec<f64> = positions.par_iter().map(|x| particle_score(x, m)).collect();

    let mut global = flat_init;
    let mut global_score = best_score[0];
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(global_score);

    for _ in 0..iterations {
        for ((x, v), pb) in positions.iter_mut().zip(&mut velocities).zip(&best_pos) {
            for c in 0..n {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let vel = settings.inertia * v[c]
                    + settings.cognitive * r1 * (pb[c] - x[c])
                    + settings.social * r2 * (global[c] - x[c]);
                v[c] = vel.clamp(-vmax, vmax);
                x[c] = (x[c] + v[c]).clamp(0.0, 1.0);
            }
        }
        let scores: Vec<f64> = positions.par_iter().map(|x| particle_score(x, m)).collect();
        for (i, &s) in scores.iter().enumerate() {
            if s > best_score[i] {
                best_score[i] = s;
                best_pos[i].copy_from_slice(&positions[i]);
            }
        }
        for (i, &s) in best_score.iter().enumerate() {
            if s > global_score {
                global_score = s;
                global.copy_from_slice(&best_pos[i]);
            }
        }
        trace.push(global_score);
    }

    Ok(DesignSet {
        points: global.chunks(m).map(<[f64]>::to_vec).collect(),
        bounds: ParamBox::unit(m),
        seed,
        iterations,
        trace,
    })
}
