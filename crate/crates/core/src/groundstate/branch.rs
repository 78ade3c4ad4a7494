use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bound_state, differentiate_real, elliptic_residual, solve_real, GroundStateOptions};
use crate::error::{LabError, Result};
use crate::spectral::field::{l2_norm, to_complex};
use crate::spectral::{sobolev_norm, Flavor, OperatorContext, SpectralField};

#[derive(Debug, Clone)]
pub struct BranchSample {
    pub modulus: f64,
    pub q_full: Vec<f64>,
    pub energy: f64,
    pub shift: f64,
    pub dq1: Vec<f64>,
    /// `D_{z2} Q = i * dq2_imag` at real `z`.
    pub dq2_imag: Vec<f64>,
    pub de: [f64; 2],
    pub iterations: usize,
    pub residual: f64,
    /// `||P_p q||` where `q = Q - z phi0`.
    pub point_leak: f64,
}

impl BranchSample {
    /// `q = Q - |z| phi0`.
    pub fn correction(&self, phi0: &[f64]) -> Vec<f64> {
        self.q_full
            .iter()
            .zip(phi0)
            .map(|(q, p)| q - self.modulus * p)
            .collect()
    }
}

/// Ground states on log-spaced real moduli with their first derivatives.
#[derive(Debug, Clone)]
pub struct GroundStateBranch {
    pub e0: f64,
    pub phi0: Vec<f64>,
    pub mu: f64,
    pub samples: Vec<BranchSample>,
}

pub fn build_branch(
    ctx: &OperatorContext,
    z_min: f64,
    z_max: f64,
    count: usize,
    opts: &GroundStateOptions,
) -> Result<GroundStateBranch> {
    if count < 2 || !(z_min > 0.0 && z_max > z_min) {
        return Err(LabError::InvalidArgument(format!(
            "branch needs 0 < z_min < z_max and >= 2 samples, got [{z_min}, {z_max}] x {count}"
        )));
    }
    let (e0, phi0) = bound_state(ctx)?;
    let h = ctx.spacing();
    let ratio = (z_max / z_min).ln() / (count - 1) as f64;
    let moduli: Vec<f64> = (0..count).map(|i| z_min * (ratio * i as f64).exp()).collect();
    let samples = moduli
        .par_iter()
        .map(|&r| {
            let g = solve_real(ctx, r, None, opts)?;
            let d = differentiate_real(ctx, r, &g.q_full, g.energy, opts.mu)?;
            let qc = to_complex(&g.q_full);
            let residual = elliptic_residual(ctx, &qc, g.energy, opts.mu);
            let corr: Vec<f64> = g.q_full.iter().zip(&phi0).map(|(q, p)| q - r * p).collect();
            let leak = corr.iter().zip(&phi0).map(|(a, b)| a * b).sum::<f64>().abs() * h;
            Ok(BranchSample {
                modulus: r,
                q_full: g.q_full,
                energy: g.energy,
                shift: g.shift,
                dq1: d.dq1,
                dq2_imag: d.dq2_imag,
                de: d.de,
                iterations: g.iterations,
                residual,
                point_leak: leak,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundStateBranch {
        e0,
        phi0,
        mu: opts.mu,
        samples,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub moduli: Vec<f64>,
    /// Slope of `log ||q||_{H^2}`; expected 3.
    pub q_slope: f64,
    /// Slope of `log ||D_z q||_{H^2}` over both directions; expected 2.
    pub dq_slope: f64,
    /// Slope of `log |e|`; expected 2.
    pub e_slope: f64,
    /// Slope of `log |D_z e|`; expected 1.
    pub de_slope: f64,
    /// Slope of `log ||D_z Q||_{H^2}` itself; near 0 since `D_z Q -> J phi0`.
    pub dq_full_slope: f64,
    /// `e / z^2` at the smallest modulus.
    pub e_over_z2_smallest: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedReport {
    pub weight_power: u32,
    /// Slope of `log ||<x>^k q||_{H^2}`; expected 3.
    pub q_slope: f64,
    /// Slope of `log ||<x>^k D_z q||_{H^2}`; expected 2.
    pub dq_slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(LabError::InvalidArgument("need >= 2 positive points for a fit".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::ZeroDenominator("log-log fit".into()));
    }
    Ok(sxy / sxx)
}

fn h2(ctx: &OperatorContext, v: &[f64], weight: f64) -> Result<f64> {
    sobolev_norm(ctx, &SpectralField::from_real(v), 2.0, Flavor::Flat, weight)
}

fn derivative_corrections(b: &GroundStateBranch, s: &BranchSample) -> (Vec<f64>, Vec<f64>) {
    let d1 = s.dq1.iter().zip(&b.phi0).map(|(a, p)| a - p).collect();
    let d2 = s.dq2_imag.iter().zip(&b.phi0).map(|(a, p)| a - p).collect();
    (d1, d2)
}

fn check_span(b: &GroundStateBranch) -> Result<Vec<f64>> {
    let m: Vec<f64> = b.samples.iter().map(|s| s.modulus).collect();
    if m.len() < 6 {
        return Err(LabError::InvalidArgument(format!(
            "scaling fits need >= 6 samples, got {}",
            m.len()
        )));
    }
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(LabError::InvalidArgument(
            "scaling fits need samples spanning a decade".into(),
        ));
    }
    Ok(m)
}

pub fn scaling_report(ctx: &OperatorContext, b: &GroundStateBranch) -> Result<ScalingReport> {
    let moduli = check_span(b)?;
    let mut qn = Vec::new();
    let mut dqn = Vec::new();
    let mut en = Vec::new();
    let mut den = Vec::new();
    let mut full = Vec::new();
    for s in &b.samples {
        full.push(h2(ctx, &s.dq1, 0.0)?.hypot(h2(ctx, &s.dq2_imag, 0.0)?));
        qn.push(h2(ctx, &s.correction(&b.phi0), 0.0)?);
        let (d1, d2) = derivative_corrections(b, s);
        dqn.push(h2(ctx, &d1, 0.0)?.hypot(h2(ctx, &d2, 0.0)?));
        en.push(s.shift.abs());
        den.push(s.de[0].hypot(s.de[1]));
    }
    let first = &b.samples[0];
    Ok(ScalingReport {
        q_slope: loglog_slope(&moduli, &qn)?,
        dq_slope: loglog_slope(&moduli, &dqn)?,
        e_slope: loglog_slope(&moduli, &en)?,
        de_slope: loglog_slope(&moduli, &den)?,
        dq_full_slope: loglog_slope(&moduli, &full)?,
        e_over_z2_smallest: first.shift / (first.modulus * first.modulus),
        moduli,
    })
}

pub fn weighted_report(ctx: &OperatorContext, b: &GroundStateBranch, k: u32) -> Result<WeightedReport> {
    if !(1..=2).contains(&k) {
        return Err(LabError::InvalidArgument(format!("weight power {k} not in {{1, 2}}")));
    }
    let moduli = check_span(b)?;
    let w = k as f64;
    let mut qn = Vec::new();
    let mut dqn = Vec::new();
    for s in &b.samples {
        qn.push(h2(ctx, &s.correction(&b.phi0), w)?);
        let (d1, d2) = derivative_corrections(b, s);
        dqn.push(h2(ctx, &d1, w)?.hypot(h2(ctx, &d2, w)?));
    }
    Ok(WeightedReport {
        weight_power: k,
        q_slope: loglog_slope(&moduli, &qn)?,
        dq_slope: loglog_slope(&moduli, &dqn)?,
    })
}

/// `int phi0^4 dx`, the leading coefficient of `e(z) / z^2` at `mu = 1`.
pub fn quartic_moment(phi0: &[f64], h: f64) -> f64 {
    phi0.iter().map(|p| p.powi(4)).sum::<f64>() * h
}

/// Relative `L^2` distance between two complex fields.
pub fn relative_distance(a: &[C64], b: &[C64], h: f64) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2_norm(&d, h) / l2_norm(b, h).max(f64::MIN_POSITIVE)
}
