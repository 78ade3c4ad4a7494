use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use super::grid::Grid1D;

/// FFT plans and wavenumbers for a periodic grid.
///
/// `forward` is unnormalized; `inverse` divides by `n`, so the pair is an exact
/// round trip up to rounding.
#[derive(Clone)]
pub struct Fourier {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("n", &self.n).finish()
    }
}

impl Fourier {
    pub fn new(grid: &Grid1D) -> Self {
        let n = grid.len();
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k: grid.wavenumbers(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn forward_in_place(&self, buf: &mut [C64]) {
        self.forward.process(buf);
    }

    pub fn inverse_in_place(&self, buf: &mut [C64]) {
        self.inverse.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward(&self, values: &[C64]) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut buf = coeffs.to_vec();
        self.inverse_in_place(&mut buf);
        buf
    }

    /// Applies the Fourier multiplier `symbol(k)` (exact for the periodic box).
    pub fn multiplier(&self, values: &[C64], symbol: impl Fn(f64) -> C64) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.multiplier_in_place(&mut buf, symbol);
        buf
    }

    pub fn multiplier_in_place(&self, buf: &mut [C64], symbol: impl Fn(f64) -> C64) {
        self.forward_in_place(buf);
        for (v, &k) in buf.iter_mut().zip(&self.k) {
            *v *= symbol(k);
        }
        self.inverse_in_place(buf);
    }

    /// Spectral first derivative (Nyquist mode dropped so real data stays real).
    pub fn derivative(&self, values: &[C64]) -> Vec<C64> {
        let mut buf = values.to_vec();
        self.forward_in_place(&mut buf);
        for (v, &k) in buf.iter_mut().zip(&self.k) {
            *v *= C64::new(0.0, k);
        }
        buf[self.n / 2] = C64::new(0.0, 0.0);
        self.inverse_in_place(&mut buf);
        buf
    }
}
