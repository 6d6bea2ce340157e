//! Surface-layer closures: power-law wind profile and eddy diffusivities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical parameters of the dispersion operator.
///
/// `p`, `z0` and `mo_length` are the calibrated quantities; the mixing
/// height and cut-off height are normally held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Wind-profile exponent (dimensionless).
    pub p: f64,
    /// Roughness length (m).
    pub z0: f64,
    /// Monin-Obukhov length (m); negative in the unstable regime used here.
    pub mo_length: f64,
    /// Mixing layer height (m).
    pub mixing_height: f64,
    /// Height below which diffusivity and wind are frozen (m).
    pub cut_height: f64,
    pub von_karman: f64,
}

pub const DEFAULT_MIXING_HEIGHT: f64 = 100.0;
pub const DEFAULT_CUT_HEIGHT: f64 = 2.0;
pub const VON_KARMAN: f64 = 0.4;

impl ModelParams {
    /// Calibration vector `(p, z0, L)` with the fixed `z_i = 100 m`, `z_cut = 2 m`.
    pub fn new(p: f64, z0: f64, mo_length: f64) -> Self {
        Self {
            p,
            z0,
            mo_length,
            mixing_height: DEFAULT_MIXING_HEIGHT,
            cut_height: DEFAULT_CUT_HEIGHT,
            von_karman: VON_KARMAN,
        }
    }

    pub fn with_mixing_height(mut self, z_i: f64) -> Self {
        self.mixing_height = z_i;
        self
    }

    pub fn with_cut_height(mut self, z_cut: f64) -> Self {
        self.cut_height = z_cut;
        self
    }

    /// Checks the physical ranges the closures are valid for.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.p,
            self.z0,
            self.mo_length,
            self.mixing_height,
            self.cut_height,
            self.von_karman,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite model parameter in {self:?}")));
        }
        if !(0.0..=0.6).contains(&self.p) {
            return Err(Error::invalid(format!("p = {} outside [0, 0.6]", self.p)));
        }
        if !(self.z0 > 0.0 && self.z0 <= 3.0) {
            return Err(Error::invalid(format!("z0 = {} outside (0, 3]", self.z0)));
        }
        if !(-600.0..0.0).contains(&self.mo_length) {
            return Err(Error::invalid(format!(
                "L = {} outside [-600, 0); stable conditions are not supported",
                self.mo_length
            )));
        }
        if self.mixing_height <= 0.0 {
            return Err(Error::invalid("mixing height must be positive"));
        }
        if !(self.cut_height > 0.0 && self.cut_height < self.mixing_height) {
            return Err(Error::invalid(format!(
                "cut-off height {} must lie in (0, z_i = {})",
                self.cut_height, self.mixing_height
            )));
        }
        if self.von_karman <= 0.0 {
            return Err(Error::invalid("von Karman constant must be positive"));
        }
        Ok(())
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{name} is not finite ({v})")))
    }
}

/// Horizontal wind speed at height `z` given the speed `v_ref` measured at `z_ref`.
///
/// Below the cut-off height the speed at the cut-off is used.
pub fn wind_profile(params: &ModelParams, z: f64, v_ref: f64, z_ref: f64) -> Result<f64> {
    let z = finite("z", z)?;
    let v_ref = finite("v_r", v_ref)?;
    let z_ref = finite("z_r", z_ref)?;
    if z < 0.0 || v_ref < 0.0 || z_ref <= 0.0 {
        return Err(Error::invalid(format!(
            "wind profile needs z >= 0, v_r >= 0, z_r > 0 (got {z}, {v_ref}, {z_ref})"
        )));
    }
    let z_eff = z.max(params.cut_height);
    Ok(v_ref * (z_eff / z_ref).powf(params.p))
}

/// Monin-Obukhov stability correction.
pub fn phi(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 + 4.7 * s
    } else {
        (1.0 - 15.0 * s).powf(-0.5)
    }
}

pub fn friction_velocity(params: &ModelParams, v_ref: f64, z_ref: f64) -> Result<f64> {
    if !(params.z0 > 0.0) || z_ref <= params.z0 {
        return Err(Error::invalid(format!(
            "reference height {z_ref} must exceed the roughness length {}",
            params.z0
        )));
    }
    Ok(params.von_karman * v_ref / (z_ref / params.z0).ln())
}

/// Diagonal eddy diffusivity: `horizontal = D11 = D22`, `vertical = D33`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusivities {
    pub horizontal: f64,
    pub vertical: f64,
}

pub fn eddy_diffusivities(
    params: &ModelParams,
    z: f64,
    v_ref: f64,
    z_ref: f64,
) -> Result<Diffusivities> {
    let z = finite("z", z)?;
    let v_ref = finite("v_r", v_ref)?;
    if z < 0.0 || v_ref < 0.0 {
        return Err(Error::invalid("eddy diffusivities need z >= 0 and v_r >= 0"));
    }
    if params.mo_length >= 0.0 {
        return Err(Error::invalid(format!(
            "horizontal diffusivity correlation requires L < 0 (got {})",
            params.mo_length
        )));
    }
    let v_star = friction_velocity(params, v_ref, z_ref)?;
    let kappa = params.von_karman;
    let z_eff = z.max(params.cut_height);
    let vertical = kappa * v_star * z_eff / phi(z_eff / params.mo_length);
    let horizontal =
        v_star * params.mixing_height.powf(0.75) * (-kappa * params.mo_length).powf(-1.0 / 3.0)
            / 10.0;
    Ok(Diffusivities {
        horizontal,
        vertical,
    })
}
