use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::lippmann::plane_wave_table;
use crate::error::{LabError, Result};
use crate::spectral::field::{l2_norm, sub};
use crate::spectral::{OperatorContext, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveOptions {
    /// Allowed fraction of mass beyond `0.9 L` along the free flow.
    pub leak_threshold: f64,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { leak_threshold: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct WaveOperatorReport {
    pub value: SpectralField,
    pub times: Vec<f64>,
    /// `||W(t_i) f - W(t_{i-1}) f|| / ||f||` for consecutive schedule times.
    pub increments: Vec<f64>,
    /// Largest relative mass beyond `0.9 L` seen along the schedule.
    pub leaked: f64,
}

fn edge_fraction(ctx: &OperatorContext, u: &[C64]) -> f64 {
    let lim = 0.9 * ctx.grid().half_length();
    let total: f64 = u.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let edge: f64 = ctx
        .grid()
        .nodes()
        .iter()
        .zip(u)
        .filter(|(x, _)| x.abs() > lim)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    edge / total
}

/// Half-length that keeps the free flow of `u` inside the box up to `t_max`.
fn suggested_half_length(ctx: &OperatorContext, u: &[C64], t_max: f64) -> f64 {
    let fourier = ctx.fourier();
    let hat = fourier.forward(u);
    let total: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
    let mut pairs: Vec<(f64, f64)> = fourier
        .wavenumbers()
        .iter()
        .zip(&hat)
        .map(|(k, v)| (k.abs(), v.norm_sqr()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    let mut k_eff = 0.0;
    for (k, w) in pairs {
        acc += w;
        k_eff = k;
        if acc >= (1.0 - 1e-10) * total {
            break;
        }
    }
    let xs = ctx.grid().nodes();
    let mass: f64 = u.iter().map(|v| v.norm_sqr()).sum();
    let mut extent = 0.0f64;
    for (x, v) in xs.iter().zip(u) {
        if v.norm_sqr() > 1e-14 * mass {
            extent = extent.max(x.abs());
        }
    }
    1.2 * (extent + 2.0 * k_eff * t_max) / 0.9
}

/// `W(t) f = e^{itH} e^{-itH0} f` along an increasing schedule ending at `t_max`.
pub fn wave_operator_apply(
    ctx: &OperatorContext,
    field: &SpectralField,
    t_max: f64,
    schedule: &[f64],
    opts: &WaveOptions,
) -> Result<WaveOperatorReport> {
    if !(t_max > 0.0) {
        return Err(LabError::InvalidArgument("t_max must be positive".into()));
    }
    let mut times: Vec<f64> = if schedule.is_empty() {
        (0..5).rev().map(|k| t_max / f64::powi(2.0, k)).collect()
    } else {
        schedule.iter().copied().filter(|&t| t > 0.0 && t < t_max).collect()
    };
    times.push(t_max);
    times.dedup();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidArgument("schedule must increase".into()));
    }
    let h = ctx.spacing();
    let f = field.values();
    let fnorm = l2_norm(f, h);
    let mut leaked = 0.0f64;
    let mut prev: Option<Vec<C64>> = None;
    let mut increments = Vec::new();
    let mut last = SpectralField::new(f.to_vec());
    for &t in &times {
        let free = ctx.propagate_free(f, t);
        let frac = edge_fraction(ctx, &free);
        leaked = leaked.max(frac);
        if frac > opts.leak_threshold {
            return Err(LabError::MassLeakage {
                leaked: frac,
                suggested_half_length: suggested_half_length(ctx, f, t_max),
            });
        }
        let w = ctx.propagate(&SpectralField::new(free), -t)?;
        if let Some(p) = &prev {
            let d = l2_norm(&sub(w.values(), p), h);
            increments.push(if fnorm > 0.0 { d / fnorm } else { 0.0 });
        }
        prev = Some(w.values().to_vec());
        last = w;
    }
    Ok(WaveOperatorReport {
        value: last,
        times,
        increments,
        leaked,
    })
}

/// `W(t)^* u = e^{itH0} e^{-itH} P_c u`.
pub fn wave_operator_adjoint_apply(ctx: &OperatorContext, field: &SpectralField, t: f64) -> Result<SpectralField> {
    let pc = ctx.projector_continuous(field)?;
    let moved = ctx.propagate(&pc, t)?;
    Ok(SpectralField::new(ctx.propagate_free(moved.values(), -t)))
}

/// `||f(H) P_c u - W(t) f(H0) W(t)^* u|| / ||u||`; the middle reduces to
/// `e^{itH} f(H0) e^{-itH} P_c u`.
pub fn intertwining_residual(
    ctx: &OperatorContext,
    u: &SpectralField,
    f: impl Fn(f64) -> f64,
    t: f64,
) -> Result<f64> {
    let pc = ctx.projector_continuous(u)?;
    let lhs = ctx.apply_function(&pc, &f)?;
    let out = ctx.propagate(&pc, t)?;
    let mid = ctx.fourier().multiplier(out.values(), |k| C64::new(f(k * k), 0.0));
    let rhs = ctx.propagate(&SpectralField::new(mid), -t)?;
    let h = ctx.spacing();
    let un = l2_norm(u.values(), h);
    if un == 0.0 {
        return Err(LabError::ZeroDenominator("intertwining residual".into()));
    }
    Ok(l2_norm(&sub(lhs.values(), rhs.values()), h) / un)
}

/// `W_+ f = F_V^* F f` through incoming plane waves
/// `e^-(x, xi) = conj(e^+(x, -xi))` at the box wavenumbers `pi m / L`.
/// Modes with `|f^(xi)|` below `1e-12 max|f^|` are skipped, as is `xi = 0`.
pub fn wave_operator_fourier(ctx: &OperatorContext, field: &SpectralField) -> Result<SpectralField> {
    let fourier = ctx.fourier();
    let xs = ctx.grid().nodes();
    let h = ctx.spacing();
    let l = ctx.grid().half_length();
    let hat = fourier.forward(field.values());
    let ks = fourier.wavenumbers();
    // continuum transform at k: h sum_j e^{-i x_j k} f_j, with x_0 = -L
    let cont: Vec<C64> = hat
        .iter()
        .zip(ks)
        .map(|(c, k)| c * h * C64::from_polar(1.0, k * l))
        .collect();
    let peak = cont.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let sel: Vec<usize> = (0..ks.len())
        .filter(|&m| ks[m] != 0.0 && cont[m].norm() > 1e-12 * peak)
        .collect();
    let flipped: Vec<f64> = sel.iter().map(|&m| -ks[m]).collect();
    let table = plane_wave_table(ctx, &flipped)?;
    let mut out = vec![C64::new(0.0, 0.0); xs.len()];
    for (col, &m) in table.columns.iter().zip(&sel) {
        let a = cont[m] / (2.0 * l);
        out.iter_mut().zip(col).for_each(|(o, e)| *o += a * e.conj());
    }
    Ok(SpectralField::new(out))
}
