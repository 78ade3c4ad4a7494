use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimates::trapezoid_weights;
use crate::error::{LabError, Result};
use crate::groundstate::loglog_slope;
use crate::rng::{complex_gaussian, stream_rng};
use crate::spectral::cutoff::{block_symbol, dyadic_exponent, frequency_of};
use crate::spectral::field::l2_norm;
use crate::spectral::{Fourier, Grid1D, OperatorContext, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BilinearConfig {
    pub n_list: Vec<f64>,
    pub m_list: Vec<f64>,
    pub samples: usize,
    /// Horizon `T_M = horizon_factor / M`.
    pub horizon_factor: f64,
    /// Quadrature points in time per horizon.
    pub time_points: usize,
    /// Width of the gaussian envelope of the random data.
    pub envelope_width: f64,
    pub seed: u64,
}

impl Default for BilinearConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4.0],
            m_list: vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0],
            samples: 20,
            horizon_factor: 10.0,
            time_points: 120,
            envelope_width: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilinearRow {
    pub n: f64,
    pub m: f64,
    /// Mean of `||(e^{-itH} D_N u)(e^{-itH} D_M v)||_{L^2_{t,x}}` at unit block norms.
    pub mean_norm: f64,
    /// Mean and max of the norm divided by `N^{(d-1)/2} M^{-1/2}`.
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub rejected: usize,
    pub half_length: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilinearTable {
    pub rows: Vec<BilinearRow>,
    /// `(N, slope of log mean_norm against log M)` over `M > N`.
    pub slopes: Vec<(f64, f64)>,
    pub max_ratio: f64,
}

fn random_field(grid: &Grid1D, width: f64, seed: u64, stream: u64) -> Vec<C64> {
    let mut rng = stream_rng(seed, stream);
    let s = 1.0 / grid.spacing().sqrt();
    grid.nodes()
        .iter()
        .map(|x| complex_gaussian(&mut rng, 1.0) * (s * (-x * x / (2.0 * width * width)).exp()))
        .collect()
}

fn stream_id(ni: usize, mi: usize, sample: usize, which: usize, attempt: usize) -> u64 {
    ((((ni as u64 * 64 + mi as u64) * 100_000 + sample as u64) * 2 + which as u64) << 8) + attempt as u64
}

fn pair_norm(us: &[Vec<C64>], vs: &[Vec<C64>], h: f64, dt: f64) -> f64 {
    let w = trapezoid_weights(us.len(), dt);
    us.iter()
        .zip(vs)
        .zip(&w)
        .map(|((u, v), wi)| {
            wi * h * u.iter().zip(v).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

/// Samples a unit-norm block of random data; resamples empty blocks.
fn block_sample(
    grid: &Grid1D,
    cfg: &BilinearConfig,
    stream: impl Fn(usize) -> u64,
    block: impl Fn(&[C64]) -> Result<Vec<C64>>,
) -> Result<(Vec<C64>, usize)> {
    for attempt in 0..16 {
        let raw = random_field(grid, cfg.envelope_width, cfg.seed, stream(attempt));
        let b = block(&raw)?;
        let n = l2_norm(&b, grid.spacing());
        if n > 1e-12 {
            return Ok((b.iter().map(|v| v / n).collect(), attempt));
        }
    }
    Err(LabError::InvalidArgument("dyadic block keeps coming out empty".into()))
}

fn summarize(rows: Vec<BilinearRow>) -> Result<BilinearTable> {
    let mut ns: Vec<f64> = rows.iter().map(|r| r.n).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    let mut slopes = Vec::new();
    for n in ns {
        let (m, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.n == n && r.m > n)
            .map(|r| (r.m, r.mean_norm))
            .unzip();
        if m.len() >= 2 {
            slopes.push((n, loglog_slope(&m, &y)?));
        }
    }
    let max_ratio = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    Ok(BilinearTable {
        rows,
        slopes,
        max_ratio,
    })
}

fn check_cfg(cfg: &BilinearConfig) -> Result<()> {
    if cfg.samples == 0 || cfg.time_points < 3 || !(cfg.horizon_factor > 0.0) {
        return Err(LabError::InvalidArgument(
            "bilinear sweep needs samples >= 1, time_points >= 3, horizon_factor > 0".into(),
        ));
    }
    for &v in cfg.n_list.iter().chain(&cfg.m_list) {
        dyadic_exponent(v)?;
    }
    Ok(())
}

fn row(n: f64, m: f64, norms: &[f64], rejected: usize, d: usize, grid: &Grid1D) -> BilinearRow {
    let scale = n.powf((d as f64 - 1.0) / 2.0) * m.powf(-0.5);
    let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
    BilinearRow {
        n,
        m,
        mean_norm,
        mean_ratio: mean_norm / scale,
        max_ratio: norms.iter().cloned().fold(0.0, f64::max) / scale,
        rejected,
        half_length: grid.half_length(),
        n_points: grid.len(),
    }
}

/// Free sweep on a grid sized per `M` so the fast block neither aliases nor
/// wraps around over `T_M`; propagation is exact through the FFT.
pub fn bilinear_sweep_free(cfg: &BilinearConfig, d: usize) -> Result<BilinearTable> {
    check_cfg(cfg)?;
    let mut rows = Vec::new();
    for (ni, &n) in cfg.n_list.iter().enumerate() {
        for (mi, &m) in cfg.m_list.iter().enumerate() {
            if m < n {
                continue;
            }
            let travel = 4.0 * cfg.horizon_factor;
            let half_length = travel + 8.0 * cfg.envelope_width;
            let k_needed = 2.5 * m;
            let raw_n = (2.0 * half_length * k_needed / std::f64::consts::PI).ceil() as usize;
            let grid = Grid1D::new(half_length, raw_n.next_power_of_two().max(256))?;
            let fourier = Fourier::new(&grid);
            let horizon = cfg.horizon_factor / m;
            let dt = horizon / (cfg.time_points - 1) as f64;
            let h = grid.spacing();
            let flat = |level: f64| {
                let fourier = &fourier;
                move |raw: &[C64]| -> Result<Vec<C64>> {
                    Ok(fourier.multiplier(raw, |k| C64::new(block_symbol(k.abs(), level), 0.0)))
                }
            };
            let results: Vec<(f64, usize)> = (0..cfg.samples)
                .into_par_iter()
                .map(|s| {
                    let (u, ru) = block_sample(&grid, cfg, |a| stream_id(ni, mi, s, 0, a), flat(n))?;
                    let (v, rv) = block_sample(&grid, cfg, |a| stream_id(ni, mi, s, 1, a), flat(m))?;
                    let uh = fourier.forward(&u);
                    let vh = fourier.forward(&v);
                    let ks = fourier.wavenumbers();
                    let mut us = Vec::with_capacity(cfg.time_points);
                    let mut vs = Vec::with_capacity(cfg.time_points);
                    for i in 0..cfg.time_points {
                        let t = i as f64 * dt;
                        let phase = |c: &[C64]| -> Vec<C64> {
                            let w: Vec<C64> = c
                                .iter()
                                .zip(ks)
                                .map(|(a, k)| a * C64::from_polar(1.0, -t * k * k))
                                .collect();
                            fourier.inverse(&w)
                        };
                        us.push(phase(&uh));
                        vs.push(phase(&vh));
                    }
                    Ok((pair_norm(&us, &vs, h, dt), ru + rv))
                })
                .collect::<Result<_>>()?;
            let norms: Vec<f64> = results.iter().map(|r| r.0).collect();
            let rejected = results.iter().map(|r| r.1).sum();
            rows.push(row(n, m, &norms, rejected, d, &grid));
        }
    }
    summarize(rows)
}

/// Perturbed sweep on the context grid: distorted blocks from the eigenbasis,
/// propagation by linear split-step with substeps of at most `0.01 / M`.
pub fn bilinear_sweep(ctx: &OperatorContext, cfg: &BilinearConfig) -> Result<BilinearTable> {
    check_cfg(cfg)?;
    let grid = *ctx.grid();
    let h = grid.spacing();
    let fourier = ctx.fourier();
    let pot = ctx.potential().samples();
    let ks = fourier.wavenumbers();
    let mut rows = Vec::new();
    for (ni, &n) in cfg.n_list.iter().enumerate() {
        for (mi, &m) in cfg.m_list.iter().enumerate() {
            if m < n {
                continue;
            }
            if grid.k_max() < 2.0 * m {
                return Err(LabError::InvalidArgument(format!(
                    "grid resolves |k| <= {:.1}, block M = {m} needs {}",
                    grid.k_max(),
                    2.0 * m
                )));
            }
            let horizon = cfg.horizon_factor / m;
            let dt_out = horizon / (cfg.time_points - 1) as f64;
            let sub = (dt_out / (0.01 / m)).ceil().max(1.0) as usize;
            let dt = dt_out / sub as f64;
            let half: Vec<C64> = ks.iter().map(|k| C64::from_polar(1.0, -0.5 * dt * k * k)).collect();
            let vphase: Vec<C64> = pot.iter().map(|v| C64::from_polar(1.0, -dt * v)).collect();
            let step = |psi: &mut Vec<C64>| {
                for _ in 0..sub {
                    fourier.forward_in_place(psi);
                    psi.iter_mut().zip(&half).for_each(|(a, b)| *a *= b);
                    fourier.inverse_in_place(psi);
                    psi.iter_mut().zip(&vphase).for_each(|(a, b)| *a *= b);
                    fourier.forward_in_place(psi);
                    psi.iter_mut().zip(&half).for_each(|(a, b)| *a *= b);
                    fourier.inverse_in_place(psi);
                }
            };
            let distorted = |level: f64| {
                move |raw: &[C64]| -> Result<Vec<C64>> {
                    Ok(ctx
                        .apply_function(&SpectralField::new(raw.to_vec()), |l| {
                            block_symbol(frequency_of(l), level)
                        })?
                        .into_values())
                }
            };
            let results: Vec<(f64, usize)> = (0..cfg.samples)
                .into_par_iter()
                .map(|s| {
                    let (u, ru) = block_sample(&grid, cfg, |a| stream_id(ni, mi, s, 0, a), distorted(n))?;
                    let (v, rv) = block_sample(&grid, cfg, |a| stream_id(ni, mi, s, 1, a), distorted(m))?;
                    let mut us = vec![u];
                    let mut vs = vec![v];
                    for _ in 1..cfg.time_points {
                        let mut a = us.last().unwrap().clone();
                        let mut b = vs.last().unwrap().clone();
                        step(&mut a);
                        step(&mut b);
                        us.push(a);
                        vs.push(b);
                    }
                    Ok((pair_norm(&us, &vs, h, dt_out), ru + rv))
                })
                .collect::<Result<_>>()?;
            let norms: Vec<f64> = results.iter().map(|r| r.0).collect();
            let rejected = results.iter().map(|r| r.1).sum();
            rows.push(row(n, m, &norms, rejected, ctx.dimension(), &grid));
        }
    }
    summarize(rows)
}
