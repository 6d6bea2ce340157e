//! Site geometry, measurement constants and solver settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub label: String,
    /// `(x, y, z)` in metres; `z` is the release height above ground.
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Receptor {
    pub label: String,
    /// Ground position `(x, y)` in metres.
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z_top: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSize {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateralBoundary {
    /// Zero-gradient outflow on downwind faces, zero concentration elsewhere.
    FarField,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopBoundary {
    ZeroValue,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundBoundary {
    /// Outward flux `v_dep * C` through the ground face.
    Deposition,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integration {
    /// March every wind segment to its end.
    Transient,
    /// March each segment for a spin-up time, then hold the final deposition
    /// rate for the rest of the segment.
    QuasiSteady {
        /// Spin-up = factor * (largest source-receptor distance) / speed.
        spin_up_factor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Direction bins for compressing the wind record; `None` keeps it exact.
    pub wind_bins: Option<usize>,
    pub integration: Integration,
    /// Fraction of the explicit stability limit used as the time step.
    pub cfl_safety: f64,
    /// Fixed time step; rejected if it exceeds the stability limit.
    pub dt: Option<f64>,
    pub lateral: LateralBoundary,
    pub top: TopBoundary,
    pub ground: GroundBoundary,
    /// Floor applied to the reference speed when sizing the spin-up.
    pub min_speed: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            wind_bins: Some(16),
            integration: Integration::QuasiSteady {
                spin_up_factor: 3.0,
            },
            cfl_safety: 0.9,
            dt: None,
            lateral: LateralBoundary::FarField,
            top: TopBoundary::ZeroValue,
            ground: GroundBoundary::Deposition,
            min_speed: 0.5,
        }
    }
}

impl SolverSettings {
    /// Exact transient integration of the full wind record.
    pub fn transient() -> Self {
        Self {
            wind_bins: None,
            integration: Integration::Transient,
            ..Self::default()
        }
    }

    pub fn closed_box(mut self) -> Self {
        self.lateral = LateralBoundary::Closed;
        self.top = TopBoundary::Closed;
        self.ground = GroundBoundary::Closed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    #[serde(default)]
    pub name: String,
    pub sources: Vec<Source>,
    pub receptors: Vec<Receptor>,
    /// Collector cross-section (m^2).
    pub jar_area: f64,
    /// Settling velocity (m/s).
    pub v_set: f64,
    /// Deposition velocity (m/s).
    pub v_dep: f64,
    /// Reference height of the wind measurement (m).
    pub z_ref: f64,
    /// Accumulation window T (s).
    pub window: f64,
    pub domain: Domain,
    pub grid: GridSize,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl SiteConfig {
    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_receptors(&self) -> usize {
        self.receptors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.receptors.is_empty() {
            return Err(Error::invalid("site needs at least one source and one receptor"));
        }
        let scalars = [
            ("jar_area", self.jar_area),
            ("v_set", self.v_set),
            ("v_dep", self.v_dep),
            ("z_ref", self.z_ref),
            ("window", self.window),
        ];
        if let Some((name, v)) = scalars.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} is not finite ({v})")));
        }
        if !(self.jar_area > 0.0) {
            return Err(Error::invalid("jar area must be positive"));
        }
        if self.v_set < 0.0 || self.v_dep < 0.0 {
            return Err(Error::invalid("settling and deposition velocities must be >= 0"));
        }
        if !(self.window > 0.0) || !(self.z_ref > 0.0) {
            return Err(Error::invalid("window and reference height must be positive"));
        }
        let d = &self.domain;
        if !(d.x[0] < d.x[1] && d.y[0] < d.y[1] && d.z_top > 0.0) {
            return Err(Error::invalid("degenerate domain bounds"));
        }
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 || g.nz == 0 {
            return Err(Error::invalid("grid needs at least one cell per axis"));
        }
        let inside_xy = |x: f64, y: f64| d.x[0] < x && x < d.x[1] && d.y[0] < y && y < d.y[1];
        for s in &self.sources {
            let [x, y, z] = s.position;
            if !(z >= 0.0) {
                return Err(Error::invalid(format!("source {} below ground", s.label)));
            }
            if !inside_xy(x, y) || z >= d.z_top {
                return Err(Error::invalid(format!("source {} outside the domain", s.label)));
            }
        }
        for r in &self.receptors {
            let [x, y] = r.position;
            if !inside_xy(x, y) {
                return Err(Error::invalid(format!("receptor {} outside the domain", r.label)));
            }
        }
        let s = &self.solver;
        if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) {
            return Err(Error::invalid("cfl_safety must lie in (0, 1]"));
        }
        if let Integration::QuasiSteady { spin_up_factor } = s.integration {
            if !(spin_up_factor > 0.0) {
                return Err(Error::invalid("spin-up factor must be positive"));
            }
        }
        if s.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(Error::invalid("fixed time step must be positive"));
        }
        Ok(())
    }

    /// Largest horizontal source-receptor distance (m).
    pub fn reach(&self) -> f64 {
        let mut reach = 0.0f64;
        for s in &self.sources {
            for r in &self.receptors {
                let dx = s.position[0] - r.position[0];
                let dy = s.position[1] - r.position[1];
                reach = reach.max(dx.hypot(dy));
            }
        }
        reach
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let site: SiteConfig = toml::from_str(text)?;
        site.validate()?;
        Ok(site)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Synthetic four-source, nine-collector layout resembling a valley
    /// smelter. The coordinates are invented.
    pub fn trail_like() -> Self {
        Self::from_toml_str(TRAIL_LIKE_TOML).expect("bundled site config is valid")
    }
}

/// The bundled synthetic site (also shipped as `data/trail-like.toml`).
pub const TRAIL_LIKE_TOML: &str = include_str!("../../data/trail-like.toml");

/// Cell-centred uniform grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Grid {
    pub fn new(domain: &Domain, size: &GridSize) -> Self {
        Self {
            origin: [domain.x[0], domain.y[0]],
            nx: size.nx,
            ny: size.ny,
            nz: size.nz,
            dx: (domain.x[1] - domain.x[0]) / size.nx as f64,
            dy: (domain.y[1] - domain.y[0]) / size.ny as f64,
            dz: domain.z_top / size.nz as f64,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        (idx % self.nx, (idx / self.nx) % self.ny, idx / (self.nx * self.ny))
    }

    pub fn centre(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.dx,
            self.origin[1] + (j as f64 + 0.5) * self.dy,
            (k as f64 + 0.5) * self.dz,
        ]
    }

    /// Cell containing a point (points on an interior face go to the upper cell).
    pub fn locate(&self, p: [f64; 3]) -> (usize, usize, usize) {
        let f = |v: f64, o: f64, h: f64, n: usize| (((v - o) / h).floor().max(0.0) as usize).min(n - 1);
        (
            f(p[0], self.origin[0], self.dx, self.nx),
            f(p[1], self.origin[1], self.dy, self.ny),
            f(p[2], 0.0, self.dz, self.nz),
        )
    }

    /// Bilinear weights of the ground-layer cell centres around `(x, y)`.
    pub fn ground_stencil(&self, x: f64, y: f64) -> Vec<(usize, f64)> {
        let axis = |v: f64, o: f64, h: f64, n: usize| -> [(usize, f64); 2] {
            let s = ((v - o) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let lo = (s.floor() as usize).min(n.saturating_sub(2));
            if n == 1 {
                return [(0, 1.0), (0, 0.0)];
            }
            let t = s - lo as f64;
            [(lo, 1.0 - t), (lo + 1, t)]
        };
        let ax = axis(x, self.origin[0], self.dx, self.nx);
        let ay = axis(y, self.origin[1], self.dy, self.ny);
        let mut out = Vec::with_capacity(4);
        for &(j, wy) in &ay {
            for &(i, wx) in &ax {
                let w = wx * wy;
                if w > 0.0 {
                    out.push((self.index(i, j, 0), w));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_site_matches_case_study_shape() {
        let site = SiteConfig::trail_like();
        assert_eq!(site.n_sources(), 4);
        assert_eq!(site.n_receptors(), 9);
        assert_eq!(site.v_set, 0.0027);
        assert_eq!(site.v_dep, 0.005);
        assert_eq!(site.jar_area, 0.0206);
    }

    #[test]
    fn bundled_domain_is_three_times_the_bounding_box() {
        let site = SiteConfig::trail_like();
        let xs = site
            .sources
            .iter()
            .map(|s| s.position[0])
            .chain(site.receptors.iter().map(|r| r.position[0]));
        let (lo, hi) = xs.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
        assert!(site.domain.x[1] - site.domain.x[0] >= 3.0 * (hi - lo));
        let ys = site
            .sources
            .iter()
            .map(|s| s.position[1])
            .chain(site.receptors.iter().map(|r| r.position[1]));
        let (lo, hi) = ys.fold((f64::MAX, f64::MIN), |(a, b), y| (a.min(y), b.max(y)));
        assert!(site.domain.y[1] - site.domain.y[0] >= 3.0 * (hi - lo));
    }

    #[test]
    fn validation_rejects_bad_sites() {
        let mut s = SiteConfig::trail_like();
        s.jar_area = 0.0;
        assert!(s.validate().is_err());
        let mut s = SiteConfig::trail_like();
        s.receptors[0].position = [1e6, 0.0];
        assert!(s.validate().is_err());
        let mut s = SiteConfig::trail_like();
        s.sources[0].position[2] = -1.0;
        assert!(s.validate().is_err());
        let mut s = SiteConfig::trail_like();
        s.window = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ground_stencil_weights_sum_to_one() {
        let g = Grid::new(
            &Domain { x: [0.0, 10.0], y: [0.0, 10.0], z_top: 5.0 },
            &GridSize { nx: 10, ny: 10, nz: 5 },
        );
        for &(x, y) in &[(0.1, 0.1), (5.0, 5.0), (5.5, 2.5), (9.99, 3.3)] {
            let st = g.ground_stencil(x, y);
            let total: f64 = st.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12, "{x},{y}");
        }
        // Exactly on a cell centre the stencil collapses to that cell.
        let st = g.ground_stencil(5.5, 2.5);
        assert_eq!(st, vec![(g.index(5, 2, 0), 1.0)]);
    }

    #[test]
    fn locate_and_unravel_agree() {
        let g = Grid::new(
            &Domain { x: [-5.0, 5.0], y: [0.0, 4.0], z_top: 3.0 },
            &GridSize { nx: 5, ny: 4, nz: 3 },
        );
        let (i, j, k) = g.locate([0.5, 2.5, 1.5]);
        assert_eq!((i, j, k), (2, 2, 1));
        assert_eq!(g.unravel(g.index(i, j, k)), (i, j, k));
    }
}
