use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::rng::complex_gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawFamily {
    ComplexGaussian,
    Rademacher,
    UniformDisc,
    /// `g = sqrt(variance)` always; not centered, only for checks.
    Degenerate,
}

/// Law of the cube coefficients `g_n`, scaled to `E|g|^2 = variance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientLaw {
    pub family: LawFamily,
    #[serde(default = "unit")]
    pub variance: f64,
}

fn unit() -> f64 {
    1.0
}

impl CoefficientLaw {
    pub fn new(family: LawFamily, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(LabError::InvalidArgument(format!("variance must be positive, got {variance}")));
        }
        Ok(Self { family, variance })
    }

    pub fn gaussian() -> Self {
        Self {
            family: LawFamily::ComplexGaussian,
            variance: 1.0,
        }
    }

    /// Disc radius with `E|g|^2 = R^2 / 2 = variance`.
    fn radius(&self) -> f64 {
        (2.0 * self.variance).sqrt()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> C64 {
        match self.family {
            LawFamily::ComplexGaussian => complex_gaussian(rng, self.variance),
            LawFamily::Rademacher => {
                let s = self.variance.sqrt();
                C64::new(if rng.gen::<bool>() { s } else { -s }, 0.0)
            }
            LawFamily::UniformDisc => {
                let r = self.radius() * rng.gen::<f64>().sqrt();
                C64::from_polar(r, std::f64::consts::TAU * rng.gen::<f64>())
            }
            LawFamily::Degenerate => C64::new(self.variance.sqrt(), 0.0),
        }
    }

    /// Constant `c` with `E e^{gamma Re g} <= e^{c gamma^2}` for real `gamma`;
    /// `None` for the degenerate law.
    pub fn subgaussian_constant(&self) -> Option<f64> {
        match self.family {
            LawFamily::ComplexGaussian => Some(self.variance / 4.0),
            LawFamily::Rademacher => Some(self.variance / 2.0),
            LawFamily::UniformDisc => Some(self.radius().powi(2) / 8.0),
            LawFamily::Degenerate => None,
        }
    }

    /// Closed form of `E e^{gamma Re g}`.
    pub fn mgf(&self, gamma: f64) -> f64 {
        match self.family {
            LawFamily::ComplexGaussian => (gamma * gamma * self.variance / 4.0).exp(),
            LawFamily::Rademacher => (gamma * self.variance.sqrt()).cosh(),
            LawFamily::UniformDisc => {
                // 2 I_1(x) / x = sum_k (x^2/4)^k / (k! (k+1)!)
                let y = (gamma * self.radius()).powi(2) / 4.0;
                let mut term = 1.0;
                let mut sum = 1.0;
                for k in 1..200 {
                    term *= y / (k as f64 * (k + 1) as f64);
                    sum += term;
                    if term < 1e-17 * sum {
                        break;
                    }
                }
                sum
            }
            LawFamily::Degenerate => (gamma * self.variance.sqrt()).exp(),
        }
    }

    pub fn is_centered(&self) -> bool {
        self.family != LawFamily::Degenerate
    }
}
