use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic stationary covariance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Exponential,
    SquaredExponential,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Exponential,
        KernelFamily::SquaredExponential,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Exponential => "exponential",
            KernelFamily::SquaredExponential => "squared-exponential",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }

    /// Correlation (kernel with `r1 = 1`) at squared distance `s2`.
    #[inline]
    pub fn correlation_sq(self, s2: f64, r2: f64) -> f64 {
        match self {
            KernelFamily::SquaredExponential => (-s2 / (2.0 * r2)).exp(),
            _ => self.correlation(s2.sqrt(), r2),
        }
    }

    #[inline]
    pub fn correlation(self, s: f64, r2: f64) -> f64 {
        match self {
            KernelFamily::Exponential => (-s / r2).exp(),
            KernelFamily::SquaredExponential => (-s * s / (2.0 * r2)).exp(),
            KernelFamily::Matern32 => {
                let a = 3f64.sqrt() * s / r2;
                (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = 5f64.sqrt() * s / r2;
                let b = s / r2;
                (1.0 + a + 5.0 / 3.0 * b * b) * (-a).exp()
            }
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelFamily::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown kernel family `{s}`")))
    }
}

/// `r1` scales the variance, `r2` the length. In the squared exponential
/// `r2` enters unsquared: `r1 exp(-s^2 / (2 r2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub r1: f64,
    pub r2: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, r1: f64, r2: f64) -> Result<Self> {
        if !(r1 > 0.0 && r2 > 0.0 && r1.is_finite() && r2.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel needs finite r1, r2 > 0 (got {r1}, {r2})"
            )));
        }
        Ok(Self { family, r1, r2 })
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.r1 * self.family.correlation(s, self.r2)
    }
}

pub fn kernel_eval(kernel: &Kernel, s: f64) -> f64 {
    kernel.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_forms() {
        for family in KernelFamily::ALL {
            let k = Kernel::new(family, 2.5, 0.7).unwrap();
            assert_eq!(k.eval(0.0), 2.5);
            assert!(k.eval(1e-9) <= 2.5);
            assert_relative_eq!(k.eval(1e-9), 2.5, max_relative = 1e-8);
            assert_eq!(family.name().parse::<KernelFamily>().unwrap(), family);
        }
        let se = Kernel::new(KernelFamily::SquaredExponential, 1.0, 1.0).unwrap();
        assert_relative_eq!(se.eval(2f64.sqrt()), (-1f64).exp(), max_relative = 1e-15);
        let m32 = Kernel::new(KernelFamily::Matern32, 1.0, 3f64.sqrt()).unwrap();
        assert_relative_eq!(m32.eval(1.0), 0.735_758_882_342_884_6, max_relative = 1e-14);
        let m52 = Kernel::new(KernelFamily::Matern52, 1.0, 1.0).unwrap();
        let a = 5f64.sqrt();
        assert_relative_eq!(m52.eval(1.0), (1.0 + a + 5.0 / 3.0) * (-a).exp(), max_relative = 1e-15);
        let ex = Kernel::new(KernelFamily::Exponential, 3.0, 2.0).unwrap();
        assert_relative_eq!(ex.eval(1.0), 3.0 * (-0.5f64).exp(), max_relative = 1e-15);
        assert!(Kernel::new(KernelFamily::Matern52, 0.0, 1.0).is_err());
    }

    #[test]
    fn squared_distance_path_agrees() {
        for family in KernelFamily::ALL {
            for s in [0.0, 0.1, 0.9, 2.3] {
                assert_relative_eq!(
                    family.correlation_sq(s * s, 0.4),
                    family.correlation(s, 0.4),
                    max_relative = 1e-14
                );
            }
        }
    }
}
