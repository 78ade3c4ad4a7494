//! Wiener randomization over the distorted momentum line and Monte-Carlo
//! tail statistics of the randomized flow.

mod law;

pub use law::{CoefficientLaw, LawFamily};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolution::estimates::{trapezoid_weights, uniform_times};
use crate::rng::slot_rng;
use crate::scattering::DistortedTransform;
use crate::spectral::cutoff::wiener;
use crate::spectral::field::{l2_norm, lp_norm};
use crate::spectral::{OperatorContext, SpectralField};

/// Unit-interval cubes `[n - 1, n + 1]` with cutoffs `psi_n(xi) = psi(xi - n)`
/// summing to one on the momentum line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WienerPartition {
    pub first: i64,
    pub last: i64,
}

impl WienerPartition {
    pub fn new(first: i64, last: i64) -> Result<Self> {
        if last < first {
            return Err(LabError::InvalidArgument("partition needs first <= last".into()));
        }
        Ok(Self { first, last })
    }

    /// Cubes touching every momentum of the transform.
    pub fn covering(transform: &DistortedTransform) -> Result<Self> {
        let m = transform.momenta();
        if m.is_empty() {
            return Err(LabError::EmptyPartition);
        }
        let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo.floor() as i64, hi.ceil() as i64)
    }

    pub fn cubes(&self) -> impl Iterator<Item = i64> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn weight(&self, n: i64, xi: f64) -> f64 {
        wiener(xi - n as f64)
    }

    /// The (at most two) cubes whose cutoff is nonzero at `xi`.
    fn active(&self, xi: f64) -> impl Iterator<Item = (i64, f64)> + '_ {
        let base = xi.floor() as i64;
        [base, base + 1]
            .into_iter()
            .filter(move |n| (self.first..=self.last).contains(n))
            .map(move |n| (n, self.weight(n, xi)))
            .filter(|(_, w)| *w != 0.0)
    }

    /// `|sum_n psi_n(xi) - 1|` at the given momenta, ignoring those outside the
    /// represented range `[first, last]`.
    pub fn unity_defect(&self, momenta: &[f64]) -> f64 {
        momenta
            .iter()
            .filter(|&&xi| xi >= self.first as f64 && xi <= self.last as f64)
            .map(|&xi| (self.cubes().map(|n| self.weight(n, xi)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Distorted-transform coefficients of `u0` with the cube draws of one sample applied.
fn randomized_coefficients(
    transform: &DistortedTransform,
    partition: &WienerPartition,
    coeffs: &[C64],
    draws: &dyn Fn(i64) -> C64,
) -> Vec<C64> {
    coeffs
        .iter()
        .zip(transform.momenta())
        .map(|(c, &xi)| {
            let m: C64 = partition.active(xi).map(|(n, w)| draws(n) * w).sum();
            c * m
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Randomized {
    pub field: SpectralField,
    /// Set when the datum carried point-spectrum mass that was dropped.
    pub projected: bool,
}

fn checked_coefficients(
    ctx: &OperatorContext,
    transform: &DistortedTransform,
    partition: &WienerPartition,
    u0: &SpectralField,
) -> Result<(Vec<C64>, bool)> {
    let h = ctx.spacing();
    let coeffs = transform.forward(u0.values())?;
    let total = l2_norm(u0.values(), h);
    let kept = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let projected = total > 0.0 && (total - kept) > 1e-12 * total;
    let covered = coeffs
        .iter()
        .zip(transform.momenta())
        .any(|(c, &xi)| c.norm() > 0.0 && partition.active(xi).next().is_some());
    if !covered {
        return Err(LabError::EmptyPartition);
    }
    Ok((coeffs, projected))
}

/// Draw of cube `n` for sample `sample` under `seed`.
pub fn cube_draw(law: &CoefficientLaw, seed: u64, sample: u64, n: i64) -> C64 {
    law.sample(&mut slot_rng(seed, sample, n))
}

/// `u0^omega = sum_n g_n M_{psi_n}(H) u0` for sample `sample` of `seed`.
pub fn randomize(
    ctx: &OperatorContext,
    transform: &DistortedTransform,
    partition: &WienerPartition,
    u0: &SpectralField,
    law: &CoefficientLaw,
    seed: u64,
    sample: u64,
) -> Result<Randomized> {
    let (coeffs, projected) = checked_coefficients(ctx, transform, partition, u0)?;
    let draws = |n: i64| cube_draw(law, seed, sample, n);
    let c = randomized_coefficients(transform, partition, &coeffs, &draws);
    Ok(Randomized {
        field: SpectralField::new(transform.adjoint(&c)?),
        projected,
    })
}

/// `M_{psi_n}(H) u0` for every cube carrying part of `u0`.
pub fn cube_pieces(
    ctx: &OperatorContext,
    transform: &DistortedTransform,
    partition: &WienerPartition,
    u0: &SpectralField,
) -> Result<Vec<(i64, Vec<C64>)>> {
    let (coeffs, _) = checked_coefficients(ctx, transform, partition, u0)?;
    let mut out = Vec::new();
    for n in partition.cubes() {
        let c: Vec<C64> = coeffs
            .iter()
            .zip(transform.momenta())
            .map(|(c, &xi)| c * partition.weight(n, xi))
            .collect();
        if c.iter().any(|v| v.norm() > 0.0) {
            out.push((n, transform.adjoint(&c)?));
        }
    }
    Ok(out)
}

/// Norms sampled by the Monte-Carlo driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NormFunctional {
    /// `||u^omega||_{L^2}` of the datum.
    DataL2,
    /// `||e^{-itH} u^omega||_{L^q_t L^r_x([0, horizon])}`, time step at most 0.05.
    Spacetime { q: f64, r: f64, horizon: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub seed: u64,
    pub n_samples: usize,
    pub values: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub fit: TailFit,
    /// Negative slope on a valid fit.
    pub pass: bool,
    /// Factor to apply to the lambda grid when the tail region is empty.
    pub suggested_scale: Option<f64>,
}

impl EnsembleReport {
    /// The fit, or the rescale hint when the tail region held too few points.
    pub fn require_fit(&self) -> Result<&TailFit> {
        if self.fit.valid {
            Ok(&self.fit)
        } else {
            Err(LabError::EmptyTailRegion {
                suggested_scale: self.suggested_scale.unwrap_or(f64::NAN),
            })
        }
    }

    /// `lambda,p_empirical,n_samples` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,p_empirical,n_samples\n");
        for (l, p) in self.lambdas.iter().zip(&self.probabilities) {
            s.push_str(&format!("{l:?},{p:?},{}\n", self.n_samples));
        }
        s
    }
}

/// Weighted least squares of `log P` against `lambda^2` over `P in [10/n, 0.1]`,
/// weights `n P / (1 - P)`.
pub fn fit_tail(lambdas: &[f64], probabilities: &[f64], n_samples: usize) -> TailFit {
    let lo = 10.0 / n_samples as f64;
    let pts: Vec<(f64, f64, f64)> = lambdas
        .iter()
        .zip(probabilities)
        .filter(|(_, &p)| p >= lo && p <= 0.1)
        .map(|(l, &p)| (l * l, p.ln(), n_samples as f64 * p / (1.0 - p)))
        .collect();
    let invalid = TailFit {
        slope: f64::NAN,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        points: pts.len(),
        valid: false,
    };
    if pts.len() < 3 {
        return invalid;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return invalid;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    TailFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: pts.len(),
        valid: true,
    }
}

/// Monte-Carlo survival function of a norm of the randomized datum or flow.
/// The flow is assembled from precomputed cube orbits `M_{psi_n} e^{-itH} u0`,
/// since the multipliers commute with `e^{-itH}`.
#[allow(clippy::too_many_arguments)]
pub fn tail_probability_mc(
    ctx: &OperatorContext,
    transform: &DistortedTransform,
    partition: &WienerPartition,
    u0: &SpectralField,
    law: &CoefficientLaw,
    norm: NormFunctional,
    lambdas: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<EnsembleReport> {
    if n_samples < 1000 {
        return Err(LabError::InvalidArgument(format!(
            "tail estimates need at least 1000 samples, got {n_samples}"
        )));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidArgument("lambda grid must increase".into()));
    }
    let h = ctx.spacing();
    let pieces = cube_pieces(ctx, transform, partition, u0)?;
    let (frames, weights, q, r): (Vec<Vec<Vec<C64>>>, Vec<f64>, f64, f64) = match norm {
        NormFunctional::DataL2 => (pieces.iter().map(|p| vec![p.1.clone()]).collect(), vec![1.0], 2.0, 2.0),
        NormFunctional::Spacetime { q, r, horizon } => {
            if !(horizon > 0.0 && q >= 1.0 && r >= 1.0) {
                return Err(LabError::InvalidArgument("space-time norm needs q, r >= 1 and horizon > 0".into()));
            }
            let (times, dt) = uniform_times(horizon, 0.05);
            let frames = pieces
                .iter()
                .map(|(_, v)| {
                    times
                        .iter()
                        .map(|&t| ctx.propagate(&SpectralField::new(v.clone()), t).map(|f| f.into_values()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            (frames, trapezoid_weights(times.len(), dt), q, r)
        }
    };
    let cubes: Vec<i64> = pieces.iter().map(|p| p.0).collect();
    let n_grid = ctx.len();
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let g: Vec<C64> = cubes.iter().map(|&n| cube_draw(law, seed, s, n)).collect();
            let mut acc = 0.0;
            for (ti, w) in weights.iter().enumerate() {
                let mut u = vec![C64::new(0.0, 0.0); n_grid];
                for (gi, f) in g.iter().zip(&frames) {
                    u.iter_mut().zip(&f[ti]).for_each(|(a, b)| *a += gi * b);
                }
                acc += w * lp_norm(&u, h, r).powf(q);
            }
            if matches!(norm, NormFunctional::DataL2) {
                acc.sqrt()
            } else {
                acc.powf(1.0 / q)
            }
        })
        .collect();
    let probabilities: Vec<f64> = lambdas
        .iter()
        .map(|&l| values.iter().filter(|&&v| v > l).count() as f64 / n_samples as f64)
        .collect();
    let fit = fit_tail(lambdas, &probabilities, n_samples);
    let suggested_scale = if fit.valid {
        None
    } else {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let target = sorted[((0.99 * n_samples as f64) as usize).min(n_samples - 1)];
        let top = lambdas.last().copied().unwrap_or(1.0);
        Some(if top > 0.0 { target / top } else { f64::NAN })
    };
    Ok(EnsembleReport {
        seed,
        n_samples,
        pass: fit.valid && fit.slope < 0.0,
        values,
        lambdas: lambdas.to_vec(),
        probabilities,
        fit,
        suggested_scale,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KhinchinReport {
    pub p: f64,
    /// `(E|sum g_n c_n|^p)^{1/p} / ||c||_2`.
    pub moment_ratio: f64,
    /// `moment_ratio / sqrt(p)`.
    pub khinchin_ratio: f64,
    pub n_samples: usize,
}

/// Monte-Carlo moment of `sum_n g_n c_n` against `sqrt(p) ||c||_2`.
pub fn khinchin_check(
    law: &CoefficientLaw,
    c: &[C64],
    p: f64,
    n_samples: usize,
    seed: u64,
) -> Result<KhinchinReport> {
    if !(p >= 1.0 && p.is_finite()) || n_samples == 0 {
        return Err(LabError::InvalidArgument("need p in [1, inf) and samples > 0".into()));
    }
    let norm = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(LabError::ZeroDenominator("Khinchin ratio".into()));
    }
    let moments: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let sum: C64 = c
                .iter()
                .enumerate()
                .map(|(n, cn)| cube_draw(law, seed, s, n as i64) * cn)
                .sum();
            sum.norm().powf(p)
        })
        .collect();
    let mean = moments.iter().sum::<f64>() / n_samples as f64;
    let moment_ratio = mean.powf(1.0 / p) / norm;
    Ok(KhinchinReport {
        p,
        moment_ratio,
        khinchin_ratio: moment_ratio / p.sqrt(),
        n_samples,
    })
}
