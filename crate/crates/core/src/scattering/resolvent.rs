use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{OperatorContext, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventOptions {
    /// Decreasing positive damping values; `None` picks four halvings
    /// starting at `1e-4` times the distance to the nearest eigenvalue.
    pub eps_schedule: Option<Vec<f64>>,
    /// Refuse energies closer than this (times `max(1, lambda)`) to the spectrum.
    pub blowup_tolerance: f64,
    /// Components with `|lambda_k - lambda|` below this are left out of the residual.
    pub shell_width: f64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            eps_schedule: None,
            blowup_tolerance: 1e-8,
            shell_width: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResolventLimit {
    pub value: SpectralField,
    /// `(H - lambda - i eps)^{-1} f` at the smallest damping.
    pub smallest_eps: Vec<C64>,
    pub eps: Vec<f64>,
    /// Distances between consecutive two-term extrapolants.
    pub defects: Vec<f64>,
    pub error_estimate: f64,
    pub nearest_eigenvalue: f64,
    /// `||(H - lambda) R f - f||` off the energy shell, relative to `||f||`.
    pub residual: f64,
}

fn nearest(ctx: &OperatorContext, lambda: f64) -> f64 {
    ctx.eigenvalues()
        .iter()
        .copied()
        .min_by(|a, b| (a - lambda).abs().total_cmp(&(b - lambda).abs()))
        .unwrap_or(f64::NAN)
}

/// Limiting absorption `R^+(lambda) f = lim (H - lambda - i eps)^{-1} f`,
/// two-term linear extrapolation in `eps` across the schedule.
pub fn resolvent_limit(
    ctx: &OperatorContext,
    lambda: f64,
    f: &SpectralField,
    opts: &ResolventOptions,
) -> Result<ResolventLimit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(LabError::InvalidArgument(format!("energy must be positive, got {lambda}")));
    }
    let near = nearest(ctx, lambda);
    let gap = (near - lambda).abs();
    let tol = opts.blowup_tolerance * lambda.max(1.0);
    if gap <= tol {
        return Err(LabError::ResolventBlowUp {
            energy: lambda,
            nearest: near,
            tolerance: tol,
        });
    }
    let eps = match &opts.eps_schedule {
        Some(s) => s.clone(),
        None => (0..4).map(|i| 1e-4 * gap / f64::powi(2.0, i)).collect(),
    };
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidArgument(
            "eps schedule must be a decreasing positive sequence of length >= 2".into(),
        ));
    }
    let c = ctx.coefficients(f)?;
    let lam = ctx.eigenvalues();
    let damped: Vec<Vec<C64>> = eps
        .iter()
        .map(|&e| {
            c.iter()
                .zip(lam)
                .map(|(ck, l)| ck / C64::new(l - lambda, -e))
                .collect()
        })
        .collect();
    let extrap: Vec<Vec<C64>> = eps
        .windows(2)
        .zip(damped.windows(2))
        .map(|(e, r)| {
            let (e0, e1) = (e[0], e[1]);
            r[0].iter()
                .zip(&r[1])
                .map(|(a, b)| (e0 * b - e1 * a) / (e0 - e1))
                .collect()
        })
        .collect();
    let best = extrap.last().unwrap().clone();
    let coeff_dist = |a: &[C64], b: &[C64]| -> f64 {
        let h = ctx.spacing();
        (h * a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>()).sqrt()
    };
    let defects: Vec<f64> = extrap.windows(2).map(|w| coeff_dist(&w[0], &w[1])).collect();
    // the extrapolant converges at second order, so the last defect overstates its error by ~3
    let error_estimate = match defects.last() {
        Some(d) => d / 3.0,
        None => coeff_dist(&damped[damped.len() - 1], &best),
    };
    let fnorm = ctx.norm(f.values());
    let mut res = 0.0;
    for ((r, ck), l) in best.iter().zip(c.iter()).zip(lam) {
        if (l - lambda).abs() >= opts.shell_width {
            res += ((l - lambda) * r - ck).norm_sqr();
        }
    }
    let residual = if fnorm > 0.0 {
        (ctx.spacing() * res).sqrt() / fnorm
    } else {
        0.0
    };
    let values = ctx.from_eigen(&best);
    let smallest = ctx.from_eigen(damped.last().unwrap());
    Ok(ResolventLimit {
        value: SpectralField::with_cache(values, best),
        smallest_eps: smallest,
        eps,
        defects,
        error_estimate,
        nearest_eigenvalue: near,
        residual,
    })
}
