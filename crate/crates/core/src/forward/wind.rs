//! Reference-height wind record and its compression into direction bins.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One wind observation. `direction` is meteorological: the bearing the wind
/// blows *from*, clockwise from north, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindSample {
    #[serde(rename = "t_s")]
    pub t: f64,
    #[serde(rename = "speed_mps")]
    pub speed: f64,
    #[serde(rename = "dir_rad")]
    pub direction: f64,
}

/// Constant wind held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindSegment {
    pub speed: f64,
    pub direction: f64,
    pub duration: f64,
}

impl WindSegment {
    /// Unit vector of the direction the air moves towards, `(east, north)`.
    pub fn heading(&self) -> (f64, f64) {
        (-self.direction.sin(), -self.direction.cos())
    }
}

/// Time-ordered wind samples; each sample holds until the next one.
#[derive(Debug, Clone, PartialEq)]
pub struct WindRecord {
    samples: Vec<WindSample>,
}

impl WindRecord {
    pub fn new(samples: Vec<WindSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("wind record is empty"));
        }
        for s in &samples {
            if !(s.t.is_finite() && s.speed.is_finite() && s.direction.is_finite()) {
                return Err(Error::invalid(format!("non-finite wind sample {s:?}")));
            }
            if s.speed < 0.0 {
                return Err(Error::invalid(format!("negative wind speed at t = {}", s.t)));
            }
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(Error::invalid(format!(
                "wind times must be strictly increasing ({} then {})",
                w[0].t, w[1].t
            )));
        }
        Ok(Self { samples })
    }

    /// A single constant wind.
    pub fn steady(speed: f64, direction: f64) -> Result<Self> {
        Self::new(vec![WindSample {
            t: 0.0,
            speed,
            direction,
        }])
    }

    pub fn samples(&self) -> &[WindSample] {
        &self.samples
    }

    pub fn check_covers(&self, window: f64) -> Result<()> {
        if self.samples[0].t > 0.0 {
            return Err(Error::invalid(format!(
                "wind record starts at t = {} and does not cover t = 0",
                self.samples[0].t
            )));
        }
        if !(window > 0.0) {
            return Err(Error::invalid("accumulation window must be positive"));
        }
        Ok(())
    }

    /// Exact piecewise-constant segments over `[0, window]`.
    pub fn segments(&self, window: f64) -> Result<Vec<WindSegment>> {
        self.check_covers(window)?;
        let mut out = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            let start = s.t.max(0.0);
            let end = self
                .samples
                .get(i + 1)
                .map_or(window, |next| next.t.min(window));
            if end > start {
                out.push(WindSegment {
                    speed: s.speed,
                    direction: s.direction,
                    duration: end - start,
                });
            }
            if end >= window {
                break;
            }
        }
        Ok(out)
    }

    /// Compresses the record into at most `bins` direction sectors.
    ///
    /// Each sector keeps its total duration, the duration-weighted mean speed
    /// and the duration-weighted circular mean direction. Empty sectors are
    /// dropped, so total duration is preserved.
    pub fn binned(&self, window: f64, bins: usize) -> Result<Vec<WindSegment>> {
        if bins == 0 {
            return Err(Error::invalid("wind bin count must be positive"));
        }
        let width = TAU / bins as f64;
        let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64); bins];
        for seg in self.segments(window)? {
            let dir = seg.direction.rem_euclid(TAU);
            let sector = (((dir + 0.5 * width) / width).floor() as usize) % bins;
            let a = &mut acc[sector];
            a.0 += seg.duration;
            a.1 += seg.duration * seg.speed;
            a.2 += seg.duration * dir.sin();
            a.3 += seg.duration * dir.cos();
        }
        Ok(acc
            .into_iter()
            .filter(|a| a.0 > 0.0)
            .map(|(dur, sp, s, c)| WindSegment {
                speed: sp / dur,
                direction: s.atan2(c).rem_euclid(TAU),
                duration: dur,
            })
            .collect())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_s", "speed_mps", "dir_rad"] {
            return Err(Error::Config(format!(
                "wind CSV header must be `t_s,speed_mps,dir_rad`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let samples = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<WindSample>, _>>()?;
        Self::new(samples)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Hourly synthetic valley-wind record: two opposing along-valley
    /// regimes with log-normal speeds.
    pub fn synthetic(window: f64, step: f64, seed: u64) -> Result<Self> {
        if !(step > 0.0 && window > 0.0) {
            return Err(Error::invalid("synthetic wind needs positive window and step"));
        }
        let mut rng = seed::rng(seed);
        let speed = LogNormal::<f64>::new(1.0, 0.45).expect("valid log-normal");
        let jitter = Normal::<f64>::new(0.0, 0.35).expect("valid normal");
        let n = (window / step).ceil() as usize;
        let mut samples = Vec::with_capacity(n);
        // Up-valley flow from the south-south-west, down-valley from the north-north-east.
        let regimes = [200f64.to_radians(), 20f64.to_radians()];
        let mut regime = 0usize;
        for k in 0..n {
            if rng.random::<f64>() < 0.08 {
                regime = 1 - regime;
            }
            let dir = (regimes[regime] + jitter.sample(&mut rng)).rem_euclid(TAU);
            let v = speed.sample(&mut rng).clamp(0.3, 15.0);
            samples.push(WindSample {
                t: k as f64 * step,
                speed: v,
                direction: dir,
            });
        }
        Self::new(samples)
    }
}

/// Angle difference wrapped into `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}
