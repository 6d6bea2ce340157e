//! Cell-centred finite-volume solver for the advection-diffusion problem.
//!
//! Horizontal transport (first-order upwind advection, central diffusion) is
//! advanced with explicit Euler. The vertical column operator (settling,
//! eddy diffusion, ground deposition flux, top condition) is advanced with
//! backward Euler, one tridiagonal solve per column. Both halves are
//! conservative and positivity preserving, and the whole step is linear in
//! the emission rates, so several emission vectors are carried side by side
//! through one operator sequence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::closures::{eddy_diffusivities, wind_profile, ModelParams};
use super::site::{
    GroundBoundary, Grid, Integration, LateralBoundary, SiteConfig, TopBoundary,
};
use super::wind::{WindRecord, WindSegment};
use crate::error::{Error, Result};

/// Cell-centred concentrations (kg/m^3) at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationField {
    pub grid: Grid,
    pub time: f64,
    pub values: Vec<f64>,
}

impl ConcentrationField {
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// Total mass in the domain (kg).
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Writes `i,j,k,x,y,z,c` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["i", "j", "k", "x", "y", "z", "c"])?;
        for (idx, c) in self.values.iter().enumerate() {
            let (i, j, k) = self.grid.unravel(idx);
            let [x, y, z] = self.grid.centre(i, j, k);
            w.write_record(&[
                i.to_string(),
                j.to_string(),
                k.to_string(),
                x.to_string(),
                y.to_string(),
                z.to_string(),
                format!("{c:e}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// When to keep copies of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snapshots {
    None,
    /// At the end of every wind segment.
    SegmentEnds,
    /// Every `interval` seconds of simulated time (transient integration only),
    /// plus segment ends.
    Every(f64),
}

/// Solution for one emission vector.
#[derive(Debug, Clone)]
pub struct ConcentrationSeries {
    pub snapshots: Vec<ConcentrationField>,
    /// Accumulated deposition per receptor (kg).
    pub deposition: Vec<f64>,
    /// Mass emitted over the window (kg).
    pub emitted_mass: f64,
    pub steps: usize,
}

/// Deposition at receptor `i` per unit emission rate of source `j`
/// (kg deposited per kg/s emitted), stored row-major `d x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReceptorMatrix {
    pub receptors: Vec<String>,
    pub sources: Vec<String>,
    pub entries: Vec<f64>,
}

impl SourceReceptorMatrix {
    pub fn new(receptors: Vec<String>, sources: Vec<String>, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != receptors.len() * sources.len() {
            return Err(Error::invalid(format!(
                "matrix needs {} entries, got {}",
                receptors.len() * sources.len(),
                entries.len()
            )));
        }
        Ok(Self {
            receptors,
            sources,
            entries,
        })
    }

    pub fn n_receptors(&self) -> usize {
        self.receptors.len()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_sources() + j]
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        let n = self.n_sources();
        self.entries
            .chunks(n)
            .map(|row| row.iter().zip(q).map(|(a, q)| a * q).sum())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|a| a * factor).collect(),
            ..self.clone()
        }
    }

    /// CSV with a `receptor` column followed by one column per source label.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["receptor".to_string()];
        header.extend(self.sources.iter().cloned());
        w.write_record(&header)?;
        for (i, label) in self.receptors.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend((0..self.n_sources()).map(|j| format!("{:e}", self.get(i, j))));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.get(0) != Some("receptor") {
            return Err(Error::Config(format!(
                "{}: first column must be `receptor`",
                path.display()
            )));
        }
        let sources: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut receptors = Vec::new();
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            receptors.push(rec.get(0).unwrap_or_default().to_string());
            for v in rec.iter().skip(1) {
                entries.push(v.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: bad number `{v}`", path.display()))
                })?);
            }
        }
        Self::new(receptors, sources, entries)
    }
}

/// Time-independent coefficients for one wind segment.
struct Operator {
    /// Stability limit of the explicit horizontal half-step.
    dt_limit: f64,
    // Horizontal coefficients, per layer: [k * nx + i] and [k * ny + j].
    xw: Vec<f64>,
    xe: Vec<f64>,
    xd: Vec<f64>,
    ys: Vec<f64>,
    yn: Vec<f64>,
    yd: Vec<f64>,
    // Vertical rates per layer: C_k' = lo C_{k-1} + up C_{k+1} - dg C_k.
    lo: Vec<f64>,
    up: Vec<f64>,
    dg: Vec<f64>,
}

/// Thomas factors of `I - dt * V` for a fixed step.
struct ColumnFactors {
    sub: Vec<f64>,
    inv_denom: Vec<f64>,
    cprime: Vec<f64>,
}

impl Operator {
    fn factor(&self, dt: f64) -> ColumnFactors {
        let nz = self.dg.len();
        let mut sub = vec![0.0; nz];
        let mut inv_denom = vec![0.0; nz];
        let mut cprime = vec![0.0; nz];
        for k in 0..nz {
            let a = -dt * self.lo[k];
            let b = 1.0 + dt * self.dg[k];
            let c = -dt * self.up[k];
            let denom = if k == 0 { b } else { b - a * cprime[k - 1] };
            sub[k] = a;
            inv_denom[k] = 1.0 / denom;
            cprime[k] = c / denom;
        }
        ColumnFactors {
            sub,
            inv_denom,
            cprime,
        }
    }
}

/// Reusable solver bound to one parameter set and site.
pub struct Solver<'a> {
    params: ModelParams,
    site: &'a SiteConfig,
    grid: Grid,
    source_cells: Vec<usize>,
    stencils: Vec<Vec<(usize, f64)>>,
}

impl<'a> Solver<'a> {
    pub fn new(params: &ModelParams, site: &'a SiteConfig) -> Result<Self> {
        params.validate()?;
        site.validate()?;
        if site.z_ref <= params.z0 {
            return Err(Error::invalid(format!(
                "reference height {} must exceed z0 = {}",
                site.z_ref, params.z0
            )));
        }
        let grid = Grid::new(&site.domain, &site.grid);
        let source_cells = site
            .sources
            .iter()
            .map(|s| {
                let (i, j, k) = grid.locate(s.position);
                grid.index(i, j, k)
            })
            .collect();
        let stencils = site
            .receptors
            .iter()
            .map(|r| grid.ground_stencil(r.position[0], r.position[1]))
            .collect();
        Ok(Self {
            params: *params,
            site,
            grid,
            source_cells,
            stencils,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Instantaneous deposition rate (kg/s) into each collector for a given field.
    pub fn receptor_rates(&self, field: &ConcentrationField) -> Vec<f64> {
        let gain = self.site.jar_area * self.site.v_set;
        self.stencils
            .iter()
            .map(|st| gain * st.iter().map(|&(c, w)| w * field.values[c]).sum::<f64>())
            .collect()
    }

    /// Wind segments actually integrated, after optional binning.
    pub fn segments(&self, wind: &WindRecord) -> Result<Vec<WindSegment>> {
        match self.site.solver.wind_bins {
            Some(bins) => wind.binned(self.site.window, bins),
            None => wind.segments(self.site.window),
        }
    }

    fn operator(&self, seg: &WindSegment) -> Result<Operator> {
        let g = &self.grid;
        let site = self.site;
        let (nx, ny, nz) = (g.nx, g.ny, g.nz);
        let (he, hn) = seg.heading();
        let d_h = eddy_diffusivities(&self.params, 0.0, seg.speed, site.z_ref)?.horizontal;
        let far = site.solver.lateral == LateralBoundary::FarField;

        let mut xw = vec![0.0; nz * nx];
        let mut xe = vec![0.0; nz * nx];
        let mut xd = vec![0.0; nz * nx];
        let mut ys = vec![0.0; nz * ny];
        let mut yn = vec![0.0; nz * ny];
        let mut yd = vec![0.0; nz * ny];

        // One axis of upwind advection + central diffusion with the lateral
        // boundary treatment.
        let fill_axis = |vel: f64, h: f64, n: usize, w: &mut [f64], e: &mut [f64], d: &mut [f64]| {
            let up = vel.max(0.0) / h;
            let dn = (-vel).max(0.0) / h;
            let diff = d_h / (h * h);
            for i in 0..n {
                let mut diag = 0.0;
                if i + 1 < n {
                    diag += up + diff;
                    e[i] = dn + diff;
                } else if far {
                    diag += if vel > 0.0 { up } else { 2.0 * diff };
                }
                if i > 0 {
                    diag += dn + diff;
                    w[i] = up + diff;
                } else if far {
                    diag += if vel < 0.0 { dn } else { 2.0 * diff };
                }
                d[i] = diag;
            }
        };

        let mut worst = 0.0f64;
        for k in 0..nz {
            let z = (k as f64 + 0.5) * g.dz;
            let speed = wind_profile(&self.params, z, seg.speed, site.z_ref)?;
            let (u, v) = (speed * he, speed * hn);
            let xr = k * nx..(k + 1) * nx;
            let yr = k * ny..(k + 1) * ny;
            fill_axis(u, g.dx, nx, &mut xw[xr.clone()], &mut xe[xr.clone()], &mut xd[xr.clone()]);
            fill_axis(v, g.dy, ny, &mut ys[yr.clone()], &mut yn[yr.clone()], &mut yd[yr.clone()]);
            let mx = xd[xr].iter().copied().fold(0.0, f64::max);
            let my = yd[yr].iter().copied().fold(0.0, f64::max);
            worst = worst.max(mx + my);
        }

        let mut lo = vec![0.0; nz];
        let mut up = vec![0.0; nz];
        let mut dg = vec![0.0; nz];
        let (dz, v_set) = (g.dz, site.v_set);
        let d33 = |z: f64| -> Result<f64> {
            Ok(eddy_diffusivities(&self.params, z, seg.speed, site.z_ref)?.vertical)
        };
        for k in 0..nz {
            if k + 1 < nz {
                let df = d33((k + 1) as f64 * dz)?;
                up[k] = v_set / dz + df / (dz * dz);
                dg[k] += df / (dz * dz);
            } else if site.solver.top == TopBoundary::ZeroValue {
                dg[k] += 2.0 * d33(nz as f64 * dz)? / (dz * dz);
            }
            if k > 0 {
                let df = d33(k as f64 * dz)?;
                lo[k] = df / (dz * dz);
                dg[k] += v_set / dz + df / (dz * dz);
            } else if site.solver.ground == GroundBoundary::Deposition {
                dg[k] += site.v_dep / dz;
            }
        }

        Ok(Operator {
            dt_limit: if worst > 0.0 { 1.0 / worst } else { f64::INFINITY },
            xw,
            xe,
            xd,
            ys,
            yn,
            yd,
            lo,
            up,
            dg,
        })
    }

    /// Step size and count covering `span` seconds.
    fn steps_for(&self, op: &Operator, span: f64) -> Result<(f64, usize)> {
        let cap = match self.site.solver.dt {
            Some(dt) if dt > op.dt_limit => {
                return Err(Error::Cfl {
                    requested: dt,
                    admissible: op.dt_limit,
                })
            }
            Some(dt) => dt,
            None => self.site.solver.cfl_safety * op.dt_limit,
        };
        let n = if cap.is_finite() {
            (span / cap).ceil().max(1.0) as usize
        } else {
            1
        };
        Ok((span / n as f64, n))
    }

    /// Integrates several emission vectors (kg/s per source) at once.
    pub fn run(
        &self,
        loads: &[Vec<f64>],
        wind: &WindRecord,
        snapshots: Snapshots,
    ) -> Result<Vec<ConcentrationSeries>> {
        let n_src = self.site.n_sources();
        if loads.is_empty() {
            return Err(Error::invalid("no emission vectors given"));
        }
        for q in loads {
            if q.len() != n_src {
                return Err(Error::invalid(format!(
                    "emission vector has {} entries, site has {n_src} sources",
                    q.len()
                )));
            }
            if q.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("emission rates must be finite and >= 0"));
            }
        }
        if let Snapshots::Every(dt) = snapshots {
            if !(dt > 0.0) {
                return Err(Error::invalid("snapshot interval must be positive"));
            }
        }
        let segments = self.segments(wind)?;
        let g = self.grid;
        let nr = loads.len();
        let n_cells = g.n_cells();
        let vol = g.cell_volume();
        let n_rec = self.site.n_receptors();
        let gain = self.site.jar_area * self.site.v_set;

        // (flat index, rate density) for every nonzero point source.
        let mut injections: Vec<(usize, f64)> = Vec::new();
        for (r, q) in loads.iter().enumerate() {
            for (j, &rate) in q.iter().enumerate() {
                if rate > 0.0 {
                    injections.push((self.source_cells[j] * nr + r, rate / vol));
                }
            }
        }

        let mut state = vec![0.0; n_cells * nr];
        let mut scratch = vec![0.0; n_cells * nr];
        let mut deposition = vec![0.0; n_rec * nr];
        let mut rate = vec![0.0; n_rec * nr];
        let mut shots: Vec<Vec<ConcentrationField>> = vec![Vec::new(); nr];
        let mut time = 0.0;
        let mut steps = 0usize;

        let ground_rate = |state: &[f64], out: &mut [f64]| {
            for (i, st) in self.stencils.iter().enumerate() {
                for r in 0..nr {
                    out[i * nr + r] =
                        gain * st.iter().map(|&(c, w)| w * state[c * nr + r]).sum::<f64>();
                }
            }
        };

        let snapshot = |state: &[f64], time: f64, shots: &mut Vec<Vec<ConcentrationField>>| {
            for (r, list) in shots.iter_mut().enumerate() {
                list.push(ConcentrationField {
                    grid: g,
                    time,
                    values: state.iter().skip(r).step_by(nr).copied().collect(),
                });
            }
        };

        for seg in &segments {
            let op = self.operator(seg)?;
            let march = match self.site.solver.integration {
                Integration::Transient => seg.duration,
                Integration::QuasiSteady { spin_up_factor } => {
                    let speed = seg.speed.max(self.site.solver.min_speed);
                    (spin_up_factor * self.site.reach() / speed).min(seg.duration)
                }
            };
            // Break the marched span at snapshot times.
            let mut cuts = Vec::new();
            if let (Snapshots::Every(every), Integration::Transient) =
                (snapshots, self.site.solver.integration)
            {
                let mut t = (time / every).floor() * every + every;
                while t < time + march - 1e-9 * every {
                    cuts.push(t - time);
                    t += every;
                }
            }
            cuts.push(march);

            let mut done = 0.0;
            for (ci, &cut) in cuts.iter().enumerate() {
                let span = cut - done;
                if span <= 0.0 {
                    continue;
                }
                let (dt, n) = self.steps_for(&op, span)?;
                let factors = op.factor(dt);
                ground_rate(&state, &mut rate);
                for _ in 0..n {
                    self.step(&op, &factors, dt, nr, &injections, &state, &mut scratch);
                    std::mem::swap(&mut state, &mut scratch);
                    for (i, dep) in deposition.iter_mut().enumerate() {
                        let before = rate[i];
                        let st = &self.stencils[i / nr];
                        let r = i % nr;
                        let after =
                            gain * st.iter().map(|&(c, w)| w * state[c * nr + r]).sum::<f64>();
                        *dep += 0.5 * dt * (before + after);
                        rate[i] = after;
                    }
                }
                steps += n;
                done = cut;
                if ci + 1 < cuts.len() {
                    self.check_finite(&state, nr, time + done)?;
                    snapshot(&state, time + done, &mut shots);
                }
            }
            // Hold the final deposition rate over the rest of the segment.
            let rest = seg.duration - march;
            if rest > 0.0 {
                ground_rate(&state, &mut rate);
                for (dep, r) in deposition.iter_mut().zip(&rate) {
                    *dep += r * rest;
                }
            }
            time += seg.duration;
            self.check_finite(&state, nr, time)?;
            if snapshots != Snapshots::None {
                snapshot(&state, time, &mut shots);
            }
        }

        let window: f64 = segments.iter().map(|s| s.duration).sum();
        Ok(loads
            .iter()
            .enumerate()
            .map(|(r, q)| ConcentrationSeries {
                snapshots: std::mem::take(&mut shots[r]),
                deposition: (0..n_rec).map(|i| deposition[i * nr + r]).collect(),
                emitted_mass: q.iter().sum::<f64>() * window,
                steps,
            })
            .collect())
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        op: &Operator,
        factors: &ColumnFactors,
        dt: f64,
        nr: usize,
        injections: &[(usize, f64)],
        state: &[f64],
        next: &mut [f64],
    ) {
        let g = &self.grid;
        let (nx, ny, nz) = (g.nx, g.ny, g.nz);
        let sx = nr;
        let sy = nx * nr;
        let sz = nx * ny * nr;

        for k in 0..nz {
            for j in 0..ny {
                let ys = op.ys[k * ny + j];
                let yn = op.yn[k * ny + j];
                let yd = op.yd[k * ny + j];
                for i in 0..nx {
                    let xw = op.xw[k * nx + i];
                    let xe = op.xe[k * nx + i];
                    let diag = op.xd[k * nx + i] + yd;
                    let base = ((k * ny + j) * nx + i) * nr;
                    for r in 0..nr {
                        let p = base + r;
                        let c = state[p];
                        let mut flux = -diag * c;
                        if i > 0 {
                            flux += xw * state[p - sx];
                        }
                        if i + 1 < nx {
                            flux += xe * state[p + sx];
                        }
                        if j > 0 {
                            flux += ys * state[p - sy];
                        }
                        if j + 1 < ny {
                            flux += yn * state[p + sy];
                        }
                        next[p] = c + dt * flux;
                    }
                }
            }
        }
        for &(p, density) in injections {
            next[p] += dt * density;
        }

        // Backward-Euler column solves, in place.
        let ColumnFactors {
            sub,
            inv_denom,
            cprime,
        } = factors;
        for col in 0..nx * ny * nr {
            next[col] *= inv_denom[0];
            for k in 1..nz {
                let p = col + k * sz;
                next[p] = (next[p] - sub[k] * next[p - sz]) * inv_denom[k];
            }
            for k in (0..nz - 1).rev() {
                let p = col + k * sz;
                next[p] -= cprime[k] * next[p + sz];
            }
        }
    }

    fn check_finite(&self, state: &[f64], nr: usize, time: f64) -> Result<()> {
        if let Some(pos) = state.iter().position(|v| !v.is_finite()) {
            let (i, j, k) = self.grid.unravel(pos / nr);
            return Err(Error::NonFinite { i, j, k, time });
        }
        Ok(())
    }
}

/// Concentration history for one emission vector `q` (kg/s per source).
pub fn solve_concentration(
    params: &ModelParams,
    q: &[f64],
    site: &SiteConfig,
    wind: &WindRecord,
    snapshots: Snapshots,
) -> Result<ConcentrationSeries> {
    let solver = Solver::new(params, site)?;
    let mut out = solver.run(&[q.to_vec()], wind, snapshots)?;
    Ok(out.remove(0))
}

/// Accumulated deposition (kg) at each receptor.
pub fn deposition_measurements(
    params: &ModelParams,
    q: &[f64],
    site: &SiteConfig,
    wind: &WindRecord,
) -> Result<Vec<f64>> {
    Ok(solve_concentration(params, q, site, wind, Snapshots::None)?.deposition)
}

/// The `d x n` matrix whose column `j` is the deposition from a unit rate at source `j`.
pub fn source_receptor_matrix(
    params: &ModelParams,
    site: &SiteConfig,
    wind: &WindRecord,
) -> Result<SourceReceptorMatrix> {
    let solver = Solver::new(params, site)?;
    let n = site.n_sources();
    let unit: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|l| if l == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let runs = solver.run(&unit, wind, Snapshots::None)?;
    let d = site.n_receptors();
    let mut entries = vec![0.0; d * n];
    for (j, run) in runs.iter().enumerate() {
        for i in 0..d {
            entries[i * n + j] = run.deposition[i];
        }
    }
    SourceReceptorMatrix::new(
        site.receptors.iter().map(|r| r.label.clone()).collect(),
        site.sources.iter().map(|s| s.label.clone()).collect(),
        entries,
    )
}
