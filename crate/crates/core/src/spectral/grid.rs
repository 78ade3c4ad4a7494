use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Uniform periodic grid on `[-L, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    half_length: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(LabError::InvalidGrid(format!(
                "half_length must be positive and finite, got {half_length}"
            )));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(LabError::InvalidGrid(format!(
                "n_points must be a power of two >= 8, got {n_points}"
            )));
        }
        Ok(Self {
            half_length,
            n_points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n_points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.node(j)).collect()
    }

    /// Angular wavenumbers in FFT order: `pi m / L` for `m = 0, 1, .., n/2-1, -n/2, .., -1`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = std::f64::consts::PI / self.half_length;
        (0..n)
            .map(|m| if m < n / 2 { m } else { m - n })
            .map(|m| m as f64 * dk)
            .collect()
    }

    /// Largest representable wavenumber (Nyquist).
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Free group-velocity travel `2 k T` compared with the wrap-around distance `2L`.
    /// Positive margin means no wrap-around over the horizon.
    pub fn wraparound_margin(&self, k_max: f64, horizon: f64) -> f64 {
        2.0 * self.half_length - 2.0 * k_max * horizon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    Zero,
    /// `-depth * sech^2(x / width)`
    SechSquared { depth: f64, width: f64 },
    /// `-depth * exp(-x^2 / (2 width^2))`
    Gaussian { depth: f64, width: f64 },
    Tabulated { samples: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `max_{|x| >= 0.9 L} |V(x)| <x>^{2.1}` relative to `max |V|`.
    pub edge_ratio: f64,
    /// `max |V(x_{j+1}) - V(x_j)| / h` relative to `max |V| / h`.
    pub derivative_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    kind: PotentialKind,
    samples: Vec<f64>,
}

impl PotentialSpec {
    pub fn zero(grid: &Grid1D) -> Self {
        Self::sample(PotentialKind::Zero, grid).expect("zero potential is always admissible")
    }

    pub fn sech_squared(grid: &Grid1D, depth: f64, width: f64) -> Result<Self> {
        Self::sample(PotentialKind::SechSquared { depth, width }, grid)
    }

    pub fn sample(kind: PotentialKind, grid: &Grid1D) -> Result<Self> {
        let xs = grid.nodes();
        let samples: Vec<f64> = match &kind {
            PotentialKind::Zero => vec![0.0; xs.len()],
            PotentialKind::SechSquared { depth, width } => {
                check_width(*width)?;
                xs.iter()
                    .map(|&x| {
                        let c = (x / width).cosh();
                        -depth / (c * c)
                    })
                    .collect()
            }
            PotentialKind::Gaussian { depth, width } => {
                check_width(*width)?;
                xs.iter()
                    .map(|&x| -depth * (-x * x / (2.0 * width * width)).exp())
                    .collect()
            }
            PotentialKind::Tabulated { samples } => {
                if samples.len() != xs.len() {
                    return Err(LabError::ShapeMismatch {
                        expected: xs.len(),
                        got: samples.len(),
                    });
                }
                samples.clone()
            }
        };
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(LabError::InvalidPotential(format!(
                "non-finite sample at node {j}"
            )));
        }
        Ok(Self { kind, samples })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    pub fn decay_report(&self, grid: &Grid1D) -> DecayReport {
        let vmax = self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if vmax == 0.0 {
            return DecayReport {
                edge_ratio: 0.0,
                derivative_bound: 0.0,
            };
        }
        let l = grid.half_length();
        let edge = grid
            .nodes()
            .iter()
            .zip(&self.samples)
            .filter(|(x, _)| x.abs() >= 0.9 * l)
            .map(|(x, v)| v.abs() * (1.0 + x * x).powf(1.05))
            .fold(0.0f64, f64::max);
        let n = self.samples.len();
        let jump = (0..n)
            .map(|j| (self.samples[(j + 1) % n] - self.samples[j]).abs())
            .fold(0.0f64, f64::max);
        DecayReport {
            edge_ratio: edge / vmax,
            derivative_bound: jump / vmax,
        }
    }
}

fn check_width(width: f64) -> Result<()> {
    if width.is_finite() && width > 0.0 {
        Ok(())
    } else {
        Err(LabError::InvalidPotential(format!(
            "width must be positive, got {width}"
        )))
    }
}

/// Japanese bracket `<x> = sqrt(1 + x^2)`.
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid1D::new(10.0, 1000).is_err());
        assert!(Grid1D::new(10.0, 4).is_err());
        assert!(Grid1D::new(-1.0, 64).is_err());
        assert!(Grid1D::new(10.0, 64).is_ok());
    }

    #[test]
    fn wavenumbers_on_two_pi_box_are_integers() {
        let g = Grid1D::new(std::f64::consts::PI, 8).unwrap();
        let k = g.wavenumbers();
        let expected = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (a, b) in k.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((g.node(0) + std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn nan_potential_is_rejected() {
        let g = Grid1D::new(5.0, 16).unwrap();
        let mut s = vec![0.0; 16];
        s[3] = f64::NAN;
        assert!(PotentialSpec::sample(PotentialKind::Tabulated { samples: s }, &g).is_err());
    }

    #[test]
    fn sech_well_decays_at_the_edge() {
        let g = Grid1D::new(40.0, 512).unwrap();
        let v = PotentialSpec::sech_squared(&g, 2.0, 1.0).unwrap();
        let r = v.decay_report(&g);
        assert!(r.edge_ratio < 1e-20, "{r:?}");
        assert!(r.derivative_bound < 1.0);
    }
}
