use std::borrow::Cow;

use faer::Mat;
use num_complex::Complex64 as C64;

use super::field::{l2_norm, SpectralField};
use super::fourier::Fourier;
use super::grid::{Grid1D, PotentialSpec};
use crate::error::{LabError, Result};
use crate::linalg;

/// Discretized `H = -d^2/dx^2 + V` on a periodic grid with its full
/// eigendecomposition.
///
/// Eigenvectors are stored orthonormal in the plain `l^2` sense; fields are
/// continuum samples, so `||u||_{L^2} = sqrt(h) |U^T u|`.
#[derive(Debug, Clone)]
pub struct OperatorContext {
    grid: Grid1D,
    potential: PotentialSpec,
    dimension: usize,
    fourier: Fourier,
    hamiltonian: Mat<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    negative: Vec<usize>,
}

impl OperatorContext {
    pub fn build(grid: Grid1D, potential: PotentialSpec, dimension: usize) -> Result<Self> {
        let n = grid.len();
        if potential.samples().len() != n {
            return Err(LabError::ShapeMismatch {
                expected: n,
                got: potential.samples().len(),
            });
        }
        if potential.samples().iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidPotential("non-finite sample".into()));
        }
        if dimension == 0 {
            return Err(LabError::InvalidArgument("dimension must be >= 1".into()));
        }
        let fourier = Fourier::new(&grid);
        let column = kinetic_column(&fourier);
        let v = potential.samples();
        let hamiltonian = Mat::from_fn(n, n, |i, j| {
            let r = (i + n - j) % n;
            column[r] + if i == j { v[i] } else { 0.0 }
        });
        let (eigenvalues, mut eigenvectors) = linalg::symmetric_eigen(&hamiltonian)?;
        for k in 0..n {
            let mut pivot = 0.0f64;
            for i in 0..n {
                let x = eigenvectors[(i, k)];
                if x.abs() > pivot.abs() + 1e-12 {
                    pivot = x;
                }
            }
            let sum: f64 = (0..n).map(|i| eigenvectors[(i, k)]).sum();
            let flip = if eigenvalues[k] < 0.0 && sum.abs() > 1e-8 {
                sum < 0.0
            } else {
                pivot < 0.0
            };
            if flip {
                for i in 0..n {
                    eigenvectors[(i, k)] = -eigenvectors[(i, k)];
                }
            }
        }
        let negative = (0..n).filter(|&k| eigenvalues[k] < 0.0).collect();
        Ok(Self {
            grid,
            potential,
            dimension,
            fourier,
            hamiltonian,
            eigenvalues,
            eigenvectors,
            negative,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hamiltonian(&self) -> &Mat<f64> {
        &self.hamiltonian
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Mat<f64> {
        &self.eigenvectors
    }

    pub fn negative_indices(&self) -> &[usize] {
        &self.negative
    }

    /// Lowest eigenvalue `e0` when it is negative.
    pub fn ground_energy(&self) -> Option<f64> {
        self.negative.first().map(|&k| self.eigenvalues[k])
    }

    /// `L^2`-normalized ground state `phi0` (positive sum), when a bound state exists.
    pub fn ground_state(&self) -> Option<Vec<f64>> {
        let k = *self.negative.first()?;
        Some(self.eigenvector_field(k))
    }

    /// Eigenvector `k` scaled to unit continuum norm.
    pub fn eigenvector_field(&self, k: usize) -> Vec<f64> {
        let s = 1.0 / self.spacing().sqrt();
        (0..self.len()).map(|i| self.eigenvectors[(i, k)] * s).collect()
    }

    /// Largest entry of `|U^T U - I|`. Costs one dense product.
    pub fn orthonormality_residual(&self) -> f64 {
        let g: Mat<f64> = self.eigenvectors.transpose() * &self.eigenvectors;
        let n = self.len();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let d = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - d).abs());
            }
        }
        worst
    }

    /// Largest entry of `|H - H^T|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                worst = worst.max((self.hamiltonian[(i, j)] - self.hamiltonian[(j, i)]).abs());
            }
        }
        worst
    }

    /// Eigenvalues inside `(-eps, eps)`; a zero-energy proxy check.
    pub fn near_zero_eigenvalues(&self, eps: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|l| l.abs() < eps)
            .collect()
    }

    /// Smallest gap between consecutive negative eigenvalues, or `None` with fewer than two.
    pub fn negative_min_gap(&self) -> Option<f64> {
        self.negative
            .windows(2)
            .map(|w| self.eigenvalues[w[1]] - self.eigenvalues[w[0]])
            .reduce(f64::min)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.len() {
            Ok(())
        } else {
            Err(LabError::ShapeMismatch {
                expected: self.len(),
                got: len,
            })
        }
    }

    /// Eigenbasis coefficients `U^T u`.
    pub fn to_eigen(&self, values: &[C64]) -> Vec<C64> {
        linalg::real_times_complex(self.eigenvectors.as_ref(), true, &[values])
            .pop()
            .unwrap_or_default()
    }

    pub fn from_eigen(&self, coefficients: &[C64]) -> Vec<C64> {
        linalg::real_times_complex(self.eigenvectors.as_ref(), false, &[coefficients])
            .pop()
            .unwrap_or_default()
    }

    pub fn to_eigen_many(&self, fields: &[&[C64]]) -> Vec<Vec<C64>> {
        linalg::real_times_complex(self.eigenvectors.as_ref(), true, fields)
    }

    pub fn from_eigen_many(&self, coefficients: &[&[C64]]) -> Vec<Vec<C64>> {
        linalg::real_times_complex(self.eigenvectors.as_ref(), false, coefficients)
    }

    /// Attaches the eigenbasis coefficients to a field.
    pub fn cache(&self, field: SpectralField) -> Result<SpectralField> {
        self.check_len(field.len())?;
        let c = self.to_eigen(field.values());
        Ok(SpectralField::with_cache(field.into_values(), c))
    }

    pub fn coefficients<'a>(&self, field: &'a SpectralField) -> Result<Cow<'a, [C64]>> {
        self.check_len(field.len())?;
        Ok(match field.cached_coefficients() {
            Some(c) => Cow::Borrowed(c),
            None => Cow::Owned(self.to_eigen(field.values())),
        })
    }

    /// `sum_k f(lambda_k) <e_k, u> e_k` for a complex-valued `f`.
    pub fn apply_complex_function(
        &self,
        field: &SpectralField,
        f: impl Fn(f64) -> C64,
    ) -> Result<SpectralField> {
        let mut c = self.coefficients(field)?.into_owned();
        for (ck, &l) in c.iter_mut().zip(&self.eigenvalues) {
            let m = f(l);
            if !(m.re.is_finite() && m.im.is_finite()) {
                return Err(LabError::UndefinedFunction { eigenvalue: l });
            }
            *ck *= m;
        }
        let values = self.from_eigen(&c);
        Ok(SpectralField::with_cache(values, c))
    }

    pub fn apply_function(
        &self,
        field: &SpectralField,
        f: impl Fn(f64) -> f64,
    ) -> Result<SpectralField> {
        self.apply_complex_function(field, |l| C64::new(f(l), 0.0))
    }

    pub fn projector_continuous(&self, field: &SpectralField) -> Result<SpectralField> {
        if self.negative.is_empty() {
            self.check_len(field.len())?;
            return Ok(field.clone());
        }
        self.apply_function(field, |l| if l < 0.0 { 0.0 } else { 1.0 })
    }

    pub fn projector_point(&self, field: &SpectralField) -> Result<SpectralField> {
        self.check_len(field.len())?;
        if self.negative.is_empty() {
            return Ok(SpectralField::zeros(field.len()));
        }
        let n = self.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for &k in &self.negative {
            let mut c = C64::new(0.0, 0.0);
            for (i, v) in field.values().iter().enumerate() {
                c += v * self.eigenvectors[(i, k)];
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += c * self.eigenvectors[(i, k)];
            }
        }
        Ok(SpectralField::new(out))
    }

    /// Removes the point-spectrum components in `O(n * #negative)`.
    pub fn project_out_point(&self, values: &mut [C64]) {
        for &k in &self.negative {
            let mut c = C64::new(0.0, 0.0);
            for (i, v) in values.iter().enumerate() {
                c += v * self.eigenvectors[(i, k)];
            }
            for (i, o) in values.iter_mut().enumerate() {
                *o -= c * self.eigenvectors[(i, k)];
            }
        }
    }

    /// `H u` through the FFT and the potential samples.
    pub fn apply_hamiltonian(&self, values: &[C64]) -> Vec<C64> {
        let mut out = self.fourier.multiplier(values, |k| C64::new(k * k, 0.0));
        for ((o, u), v) in out.iter_mut().zip(values).zip(self.potential.samples()) {
            *o += u * v;
        }
        out
    }

    /// `H u` through the stored dense matrix.
    pub fn apply_matrix(&self, values: &[C64]) -> Vec<C64> {
        linalg::real_times_complex(self.hamiltonian.as_ref(), false, &[values])
            .pop()
            .unwrap_or_default()
    }

    /// Unitary propagator `exp(-i t H) u`, exact in the eigenbasis.
    pub fn propagate(&self, field: &SpectralField, t: f64) -> Result<SpectralField> {
        self.apply_complex_function(field, |l| C64::from_polar(1.0, -t * l))
    }

    /// Free propagator `exp(-i t H0) u` via the FFT.
    pub fn propagate_free(&self, values: &[C64], t: f64) -> Vec<C64> {
        self.fourier
            .multiplier(values, |k| C64::from_polar(1.0, -t * k * k))
    }

    pub fn norm(&self, values: &[C64]) -> f64 {
        l2_norm(values, self.spacing())
    }
}

/// First column of the spectral kinetic matrix, `IFFT(k^2)`, symmetrized so
/// the assembled matrix is exactly symmetric.
fn kinetic_column(fourier: &Fourier) -> Vec<f64> {
    let n = fourier.len();
    let symbol: Vec<C64> = fourier
        .wavenumbers()
        .iter()
        .map(|k| C64::new(k * k, 0.0))
        .collect();
    let t = fourier.inverse(&symbol);
    (0..n)
        .map(|r| 0.5 * (t[r].re + t[(n - r) % n].re))
        .collect()
}
