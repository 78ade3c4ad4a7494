use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::groundstate::loglog_slope;
use crate::spectral::field::{l2_norm, lp_norm};
use crate::spectral::{sobolev_norm, Flavor, OperatorContext, SpectralField};

/// Trapezoid weights for `n` points at spacing `dt`.
pub(crate) fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if i == 0 || i + 1 == n { 0.5 * dt } else { dt })
        .collect()
}

/// Uniform times on `[0, horizon]` with spacing at most `max_step`.
pub(crate) fn uniform_times(horizon: f64, max_step: f64) -> (Vec<f64>, f64) {
    let n = (horizon / max_step).ceil().max(1.0) as usize;
    let dt = horizon / n as f64;
    ((0..=n).map(|i| i as f64 * dt).collect(), dt)
}

/// `e^{-i t H} u` at many times from eigen coefficients, in batches.
pub(crate) fn eigen_orbit(ctx: &OperatorContext, coeffs: &[C64], times: &[f64]) -> Vec<Vec<C64>> {
    let lambda = ctx.eigenvalues();
    let mut out = Vec::with_capacity(times.len());
    for chunk in times.chunks(64) {
        let rows: Vec<Vec<C64>> = chunk
            .iter()
            .map(|&t| {
                coeffs
                    .iter()
                    .zip(lambda)
                    .map(|(c, l)| c * C64::from_polar(1.0, -t * l))
                    .collect()
            })
            .collect();
        let refs: Vec<&[C64]> = rows.iter().map(|r| r.as_slice()).collect();
        out.extend(ctx.from_eigen_many(&refs));
    }
    out
}

fn check_admissible(q: f64, r: f64, d: usize) -> Result<()> {
    let df = d as f64;
    let ok = q >= 2.0 && r >= 2.0 && (2.0 / q + df / r - df / 2.0).abs() < 1e-12;
    if ok {
        Ok(())
    } else {
        Err(LabError::Inadmissible { q, r, d })
    }
}

/// `||e^{-itH} P_c u0||_{L^q_t L^r_x([0, horizon])} / ||u0||_2`.
pub fn strichartz_ratio(
    ctx: &OperatorContext,
    u0: &SpectralField,
    q: f64,
    r: f64,
    horizon: f64,
) -> Result<f64> {
    check_admissible(q, r, ctx.dimension())?;
    if !(horizon > 0.0) {
        return Err(LabError::InvalidArgument("horizon must be positive".into()));
    }
    let h = ctx.spacing();
    let denom = l2_norm(u0.values(), h);
    if denom == 0.0 {
        return Err(LabError::ZeroDenominator("Strichartz ratio".into()));
    }
    let mut c = ctx.coefficients(u0)?.into_owned();
    for &k in ctx.negative_indices() {
        c[k] = C64::new(0.0, 0.0);
    }
    if c.iter().all(|v| v.norm() < 1e-300) {
        return Ok(0.0);
    }
    let (times, dt) = uniform_times(horizon, 0.05);
    let w = trapezoid_weights(times.len(), dt);
    let orbit = eigen_orbit(ctx, &c, &times);
    let total: f64 = orbit
        .iter()
        .zip(&w)
        .map(|(u, wi)| wi * lp_norm(u, h, r).powf(q))
        .sum();
    Ok(total.powf(1.0 / q) / denom)
}

/// Forcing term of the linear equation `i psi_t = H psi + F`.
#[derive(Debug, Clone)]
pub enum Forcing {
    Zero,
    /// Samples `F(k dt)`, `k = 0..`, covering the horizon.
    Sampled { dt: f64, fields: Vec<Vec<C64>> },
}

/// `int_0^T ||P_c psi(t)||^2_{H^{1,sigma}} dt` by the trapezoid rule over the
/// given uniform samples; the weighted norm is `||<D> (<x>^sigma u)||_2`.
pub fn weighted_local_energy(
    ctx: &OperatorContext,
    fields: &[Vec<C64>],
    dt: f64,
    sigma: f64,
) -> Result<f64> {
    let w = trapezoid_weights(fields.len(), dt);
    let mut acc = 0.0;
    for (f, wi) in fields.iter().zip(&w) {
        let mut v = f.clone();
        ctx.project_out_point(&mut v);
        let n = sobolev_norm(ctx, &SpectralField::new(v), 1.0, Flavor::Flat, sigma)?;
        acc += wi * n * n;
    }
    Ok(acc)
}

/// `int ||P_c psi||^2_{H^{1,sigma}} dt / (||psi0||^2_{H^{1/2}} + int ||<x>^{-sigma} F||^2 dt)`.
pub fn local_smoothing_ratio(
    ctx: &OperatorContext,
    psi0: &SpectralField,
    forcing: &Forcing,
    horizon: f64,
    sigma: f64,
) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(LabError::InvalidArgument("horizon must be positive".into()));
    }
    let c0 = ctx.coefficients(psi0)?.into_owned();
    let (fields, dt, forcing_norm) = match forcing {
        Forcing::Zero => {
            let (times, dt) = uniform_times(horizon, 0.05);
            (eigen_orbit(ctx, &c0, &times), dt, 0.0)
        }
        Forcing::Sampled { dt, fields: f } => {
            let steps = (horizon / dt).round() as usize;
            if f.len() < steps + 1 || *dt <= 0.0 {
                return Err(LabError::InvalidArgument(
                    "forcing samples do not cover the horizon".into(),
                ));
            }
            let lambda = ctx.eigenvalues();
            let fc: Vec<Vec<C64>> = ctx.to_eigen_many(
                &f[..=steps].iter().map(|v| v.as_slice()).collect::<Vec<_>>(),
            );
            // Duhamel: c(t) = e^{-iλt}[c0 - i ∫_0^t e^{iλs} F(s) ds], trapezoid in s
            let mut integral = vec![C64::new(0.0, 0.0); c0.len()];
            let mut coeffs = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                let t = k as f64 * dt;
                if k > 0 {
                    let s0 = (k - 1) as f64 * dt;
                    for (j, acc) in integral.iter_mut().enumerate() {
                        let a = C64::from_polar(1.0, s0 * lambda[j]) * fc[k - 1][j];
                        let b = C64::from_polar(1.0, t * lambda[j]) * fc[k][j];
                        *acc += 0.5 * dt * (a + b);
                    }
                }
                let c: Vec<C64> = (0..c0.len())
                    .map(|j| {
                        C64::from_polar(1.0, -t * lambda[j])
                            * (c0[j] - C64::new(0.0, 1.0) * integral[j])
                    })
                    .collect();
                coeffs.push(c);
            }
            let refs: Vec<&[C64]> = coeffs.iter().map(|c| c.as_slice()).collect();
            let fields = ctx.from_eigen_many(&refs);
            let w = trapezoid_weights(steps + 1, *dt);
            let mut fnorm = 0.0;
            for (v, wi) in f[..=steps].iter().zip(&w) {
                let n = sobolev_norm(ctx, &SpectralField::new(v.clone()), 0.0, Flavor::Flat, -sigma)?;
                fnorm += wi * n * n;
            }
            (fields, *dt, fnorm)
        }
    };
    let numerator = weighted_local_energy(ctx, &fields, dt, sigma)?;
    let d = sobolev_norm(ctx, psi0, 0.5, Flavor::Flat, 0.0)?;
    let denominator = d * d + forcing_norm;
    if denominator == 0.0 {
        return Err(LabError::ZeroDenominator("local smoothing ratio".into()));
    }
    Ok(numerator / denominator)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub slope: f64,
    /// `sup_t t^{d(1/2 - 1/p)} ||u(t)||_p`.
    pub weighted_sup: f64,
}

/// `L^p` norms of `e^{-itG} f` (optionally `P_c f`) at log-spaced times in
/// `[t0, t1]` and their log-log slope.
pub fn dispersive_decay(
    ctx: &OperatorContext,
    f: &SpectralField,
    generator: super::Generator,
    project: bool,
    p: f64,
    window: (f64, f64),
    count: usize,
) -> Result<DecayFit> {
    let (t0, t1) = window;
    if !(t0 > 0.0 && t1 > t0) || count < 2 {
        return Err(LabError::InvalidArgument("need 0 < t0 < t1 and >= 2 times".into()));
    }
    let h = ctx.spacing();
    let ratio = (t1 / t0).ln() / (count - 1) as f64;
    let times: Vec<f64> = (0..count).map(|i| t0 * (ratio * i as f64).exp()).collect();
    let mut data = f.values().to_vec();
    if project {
        ctx.project_out_point(&mut data);
    }
    let orbit: Vec<Vec<C64>> = match generator {
        super::Generator::Free => times.iter().map(|&t| ctx.propagate_free(&data, t)).collect(),
        super::Generator::Perturbed => {
            let c = ctx.to_eigen(&data);
            eigen_orbit(ctx, &c, &times)
        }
    };
    let norms: Vec<f64> = orbit.iter().map(|u| lp_norm(u, h, p)).collect();
    let slope = loglog_slope(&times, &norms)?;
    let expo = ctx.dimension() as f64 * (0.5 - if p.is_infinite() { 0.0 } else { 1.0 / p });
    let weighted_sup = times
        .iter()
        .zip(&norms)
        .map(|(t, n)| t.powf(expo) * n)
        .fold(0.0, f64::max);
    Ok(DecayFit {
        times,
        norms,
        slope,
        weighted_sup,
    })
}
