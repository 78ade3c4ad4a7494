use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{decompose, rhs_at, DecomposeOptions, RemainderForm};
use crate::error::{LabError, Result};
use crate::evolution::{nls_evolve_observed, EvolutionConfig};
use crate::groundstate::BranchInterpolant;
use crate::randomization::{randomize, CoefficientLaw, WienerPartition};
use crate::rng::stream_rng;
use crate::scattering::DistortedTransform;
use crate::spectral::field::{l2_norm, real_inner};
use crate::spectral::{sobolev_norm, Flavor, OperatorContext, SpectralField};

/// `amplitude * exp(-(x - center)^2 / (2 width^2) + i carrier (x - center))`,
/// rescaled to `L^2` norm `amplitude` after projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpRecipe {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default)]
    pub carrier: f64,
    #[serde(default)]
    pub center: f64,
}

impl BumpRecipe {
    /// The projected, normalized bump times `phase`.
    pub fn profile(&self, ctx: &OperatorContext, phase: C64) -> Result<Vec<C64>> {
        if !(self.width > 0.0 && self.amplitude >= 0.0) {
            return Err(LabError::InvalidArgument(format!(
                "bump needs width > 0 and amplitude >= 0, got {} and {}",
                self.width, self.amplitude
            )));
        }
        let mut v: Vec<C64> = ctx
            .grid()
            .nodes()
            .iter()
            .map(|x| {
                let y = x - self.center;
                phase * C64::from_polar((-y * y / (2.0 * self.width * self.width)).exp(), self.carrier * y)
            })
            .collect();
        ctx.project_out_point(&mut v);
        let n = l2_norm(&v, ctx.spacing());
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x *= self.amplitude / n);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomComponent {
    pub epsilon: f64,
    /// Datum `u0` before randomization; its amplitude is the `L^2` norm.
    pub datum: BumpRecipe,
    pub law: CoefficientLaw,
    pub seed: u64,
    #[serde(default)]
    pub sample: u64,
}

/// `psi0 = Q(z0) + P_c bump (random phase) + epsilon u0^omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRecipe {
    pub z0: [f64; 2],
    pub perturbation: BumpRecipe,
    #[serde(default)]
    pub perturbation_seed: u64,
    #[serde(default)]
    pub randomized: Option<RandomComponent>,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub psi0: Vec<C64>,
    /// `epsilon u0^omega`, the linear part removed from `nu`.
    pub linear0: Option<Vec<C64>>,
}

impl PreparedData {
    /// Multiplies the whole datum by `exp(i theta)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let r = C64::from_polar(1.0, theta);
        Self {
            psi0: self.psi0.iter().map(|v| v * r).collect(),
            linear0: self.linear0.as_ref().map(|l| l.iter().map(|v| v * r).collect()),
        }
    }
}

/// Builds the initial datum; `transform` is needed only for a random component.
pub fn prepare_data(
    ctx: &OperatorContext,
    branch: &BranchInterpolant,
    recipe: &DataRecipe,
    transform: Option<&DistortedTransform>,
) -> Result<PreparedData> {
    let z0 = C64::new(recipe.z0[0], recipe.z0[1]);
    let q = branch.evaluate(z0, false)?.q;
    let phase = {
        let mut rng = stream_rng(recipe.perturbation_seed, 0);
        C64::from_polar(1.0, std::f64::consts::TAU * rng.gen::<f64>())
    };
    let bump = recipe.perturbation.profile(ctx, phase)?;
    let mut psi0: Vec<C64> = q.iter().zip(&bump).map(|(a, b)| a + b).collect();
    let linear0 = match &recipe.randomized {
        None => None,
        Some(rc) => {
            let t = transform.ok_or_else(|| {
                LabError::InvalidArgument("a random component needs a distorted transform".into())
            })?;
            let u0 = SpectralField::new(rc.datum.profile(ctx, C64::new(1.0, 0.0))?);
            let part = WienerPartition::covering(t)?;
            let r = randomize(ctx, t, &part, &u0, &rc.law, rc.seed, rc.sample)?;
            let lin: Vec<C64> = r.field.values().iter().map(|v| v * rc.epsilon).collect();
            psi0.iter_mut().zip(&lin).for_each(|(a, b)| *a += b);
            Some(lin)
        }
    };
    Ok(PreparedData { psi0, linear0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub evolution: EvolutionConfig,
    /// `nu` norms are evaluated every this many output samples.
    #[serde(default = "ten")]
    pub diagnostic_stride: usize,
    #[serde(default)]
    pub remainder: RemainderForm,
    #[serde(default)]
    pub decompose: DecomposeOptions,
    /// Weight exponent of the `H^{1, sigma}` radiation norm.
    #[serde(default = "sigma")]
    pub sigma: f64,
}

fn ten() -> usize {
    10
}

fn sigma() -> f64 {
    -0.6
}

impl StabilityConfig {
    pub fn new(evolution: EvolutionConfig) -> Self {
        Self {
            evolution,
            diagnostic_stride: 10,
            remainder: RemainderForm::Exact,
            decompose: DecomposeOptions::default(),
            sigma: -0.6,
        }
    }
}

/// `||e^{i t2 H} nu(t2) - e^{i t1 H} nu(t1)||_{H^{1/2}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringIncrement {
    pub t1: f64,
    pub t2: f64,
    pub value: f64,
}

/// Time series of one stability run. Quantities that are not evaluated at a
/// sample (finite differences at the ends, `nu` between diagnostic samples)
/// are `NaN`.
#[derive(Debug, Clone, Default)]
pub struct ModulationRecord {
    pub times: Vec<f64>,
    pub z: Vec<C64>,
    pub energy: Vec<f64>,
    /// Trapezoid accumulation of `int_0^t E(z)`.
    pub theta: Vec<f64>,
    pub m: Vec<C64>,
    pub mdot_ode: Vec<C64>,
    pub mdot_fd: Vec<C64>,
    /// `int_0^t |m'|` of the piecewise-linear `m`.
    pub mdot_integral: Vec<f64>,
    pub nu_h_half: Vec<f64>,
    pub eta_weighted: Vec<f64>,
    pub eta_weighted_integral: Vec<f64>,
    pub pp_norm: Vec<f64>,
    /// `|(<i P_c eta, d_{z1} Q>, <i P_c eta, d_{z2} Q>)|`.
    pub pp_bound: Vec<f64>,
    pub orthogonality_residual: Vec<f64>,
    pub ode_residual: Vec<f64>,
    /// `(t, e^{itH} nu(t))` at the dyadic times `1, 2, 4, ...`.
    pub scattered: Vec<(f64, Vec<C64>)>,
    pub increments: Vec<ScatteringIncrement>,
    /// Set once the increments are measured against a reference run.
    pub reference_subtracted: bool,
    pub truncated: Option<String>,
    pub dt: f64,
}

fn nan_c() -> C64 {
    C64::new(f64::NAN, f64::NAN)
}

impl ModulationRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s < t - 1e-9 * t.abs().max(1.0)).min(self.len().saturating_sub(1))
    }

    /// `sup_{t >= T} |m(t) - m(T)|` with `T = fraction * t_last`.
    pub fn tail_variation(&self, fraction: f64) -> f64 {
        let Some(&t_last) = self.times.last() else {
            return 0.0;
        };
        let k = self.index_at(fraction * t_last);
        self.m[k..].iter().map(|v| (v - self.m[k]).norm()).fold(0.0, f64::max)
    }

    /// `int_T^{t_last} |m'|` with `T = fraction * t_last`.
    pub fn tail_integral(&self, fraction: f64) -> f64 {
        let Some(&t_last) = self.times.last() else {
            return 0.0;
        };
        let k = self.index_at(fraction * t_last);
        self.mdot_integral[self.len() - 1] - self.mdot_integral[k]
    }

    pub fn max_ode_residual(&self) -> f64 {
        self.ode_residual.iter().filter(|v| v.is_finite()).fold(0.0, |m, &v| m.max(v))
    }

    pub fn increments_decreasing(&self) -> bool {
        self.increments.windows(2).all(|w| w[1].value < w[0].value)
    }

    /// Last value of `m`, the estimate of its limit.
    pub fn z_plus(&self) -> Option<C64> {
        self.m.last().copied()
    }

    /// Recomputes the increments of `e^{itH}(nu - nu_ref)`, with `nu_ref` from an
    /// unperturbed run of `Q(z0)` at the same time step. This removes the static
    /// splitting defect of the numerical soliton, which rotates with the soliton
    /// phase and otherwise puts an `O(dt^2)` floor under the increments.
    pub fn subtract_reference(&mut self, ctx: &OperatorContext, reference: &ModulationRecord) -> Result<()> {
        if reference.dt != self.dt {
            return Err(LabError::InvalidArgument(format!(
                "reference time step {} differs from {}",
                reference.dt, self.dt
            )));
        }
        let mut diffs = Vec::with_capacity(self.scattered.len());
        for (t, v) in &self.scattered {
            let (_, r) = reference
                .scattered
                .iter()
                .find(|(s, _)| (s - t).abs() < 1e-9 * t.max(1.0))
                .ok_or_else(|| LabError::InvalidArgument(format!("reference has no sample at t = {t}")))?;
            diffs.push((*t, v.iter().zip(r).map(|(a, b)| a - b).collect::<Vec<C64>>()));
        }
        self.increments = increments_of(ctx, &diffs)?;
        self.reference_subtracted = true;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,re_z,im_z,re_m,im_m,abs_mdot_fd,abs_mdot_ode,nu_h_half,eta_weighted,pp_norm\n");
        for k in 0..self.len() {
            s.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                self.times[k],
                self.z[k].re,
                self.z[k].im,
                self.m[k].re,
                self.m[k].im,
                self.mdot_fd[k].norm(),
                self.mdot_ode[k].norm(),
                self.nu_h_half[k],
                self.eta_weighted[k],
                self.pp_norm[k],
            ));
        }
        s
    }

    pub fn summary(&self, tail_fraction: f64) -> ModulationSummary {
        let pp = radiation_discrete_part(self);
        ModulationSummary {
            samples: self.len(),
            t_final: self.times.last().copied().unwrap_or(0.0),
            z_plus: self.z_plus().map(|v| [v.re, v.im]),
            tail_fraction,
            tail_variation: self.tail_variation(tail_fraction),
            tail_integral: self.tail_integral(tail_fraction),
            max_ode_residual: self.max_ode_residual(),
            increments: self.increments.clone(),
            increments_decreasing: self.increments_decreasing(),
            reference_subtracted: self.reference_subtracted,
            pp_final_over_max: pp.final_over_max,
            pp_bound_constant: pp.bound_constant,
            truncated: self.truncated.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationSummary {
    pub samples: usize,
    pub t_final: f64,
    pub z_plus: Option<[f64; 2]>,
    pub tail_fraction: f64,
    pub tail_variation: f64,
    pub tail_integral: f64,
    pub max_ode_residual: f64,
    pub increments: Vec<ScatteringIncrement>,
    pub increments_decreasing: bool,
    pub reference_subtracted: bool,
    pub pp_final_over_max: f64,
    pub pp_bound_constant: f64,
    pub truncated: Option<String>,
}

/// Evolves the full NLS from `data` and decomposes every output sample.
pub fn stability_experiment(
    ctx: &OperatorContext,
    branch: &BranchInterpolant,
    data: &PreparedData,
    cfg: &StabilityConfig,
) -> Result<ModulationRecord> {
    if cfg.diagnostic_stride == 0 {
        return Err(LabError::InvalidArgument("diagnostic_stride must be positive".into()));
    }
    if (cfg.evolution.mu - branch.mu()).abs() > 0.0 {
        return Err(LabError::InvalidArgument(format!(
            "evolution mu = {} differs from branch mu = {}",
            cfg.evolution.mu,
            branch.mu()
        )));
    }
    let h = ctx.spacing();
    let lam = ctx.eigenvalues();
    let linear_coeffs = data.linear0.as_ref().map(|l| ctx.to_eigen(l));
    let linear_at = |t: f64| -> Option<Vec<C64>> {
        linear_coeffs.as_ref().map(|c| {
            let ct: Vec<C64> = c.iter().zip(lam).map(|(v, l)| v * C64::from_polar(1.0, -l * t)).collect();
            ctx.from_eigen(&ct)
        })
    };
    let sample_dt = cfg.evolution.dt * cfg.evolution.stride as f64;
    let mut dyadic: Vec<f64> = Vec::new();
    let mut t = 1.0;
    while t <= cfg.evolution.t_final * (1.0 + 1e-12) {
        dyadic.push(t);
        t *= 2.0;
    }
    let mut rec = ModulationRecord {
        dt: cfg.evolution.dt,
        ..Default::default()
    };
    let mut scattered: Vec<(f64, Vec<C64>)> = Vec::new();
    let mut prev_z: Option<C64> = None;
    let mut sample = 0usize;
    let run = nls_evolve_observed(ctx, &data.psi0, &cfg.evolution, |t, psi| {
        let is_dyadic = dyadic.iter().any(|d| (d - t).abs() < 0.25 * sample_dt);
        let diagnostic = sample % cfg.diagnostic_stride == 0 || is_dyadic;
        sample += 1;
        let linear = if diagnostic { linear_at(t) } else { None };
        let state = match decompose(ctx, branch, psi, prev_z, linear.as_deref(), &cfg.decompose) {
            Ok(s) => s,
            Err(e) => {
                rec.truncated = Some(format!("decomposition failed at t = {t}: {e}"));
                return Ok(false);
            }
        };
        let point = branch.evaluate(state.z, true)?;
        let rhs = match rhs_at(ctx, &point, &state.eta, branch.mu(), cfg.remainder) {
            Ok(r) => r,
            Err(e) => {
                rec.truncated = Some(format!("modulation matrix failed at t = {t}: {e}"));
                return Ok(false);
            }
        };
        let theta = match (rec.times.last(), rec.energy.last(), rec.theta.last()) {
            (Some(&t0), Some(&e0), Some(&th)) => th + 0.5 * (t - t0) * (e0 + state.energy),
            _ => 0.0,
        };
        let m = state.z * C64::from_polar(1.0, theta);
        let integral = match (rec.m.last(), rec.mdot_integral.last()) {
            (Some(m0), Some(&acc)) => acc + (m - m0).norm(),
            _ => 0.0,
        };
        let eta_field = SpectralField::new(state.eta.clone());
        let eta_w = sobolev_norm(ctx, &eta_field, 1.0, Flavor::Flat, cfg.sigma)?;
        let eta_int = match (rec.times.last(), rec.eta_weighted.last(), rec.eta_weighted_integral.last()) {
            (Some(&t0), Some(&w0), Some(&acc)) => acc + 0.5 * (t - t0) * (w0 * w0 + eta_w * eta_w),
            _ => 0.0,
        };
        let pc: Vec<C64> = {
            let phi = ctx.ground_state().expect("bound state checked by decompose");
            state.eta.iter().zip(&phi).map(|(e, f)| e - state.alpha_coeff * f).collect()
        };
        let ipc: Vec<C64> = pc.iter().map(|v| C64::new(-v.im, v.re)).collect();
        let bound = real_inner(&ipc, &point.dq[0], h).hypot(real_inner(&ipc, &point.dq[1], h));
        let nu_norm = if diagnostic {
            sobolev_norm(ctx, &SpectralField::new(state.nu.clone()), 0.5, Flavor::Flat, 0.0)?
        } else {
            f64::NAN
        };
        if is_dyadic {
            let back = ctx.propagate(&SpectralField::new(state.nu.clone()), -t)?;
            scattered.push((t, back.into_values()));
        }
        rec.times.push(t);
        rec.z.push(state.z);
        rec.energy.push(state.energy);
        rec.theta.push(theta);
        rec.m.push(m);
        rec.mdot_ode.push(rhs.mdot(theta));
        rec.mdot_integral.push(integral);
        rec.nu_h_half.push(nu_norm);
        rec.eta_weighted.push(eta_w);
        rec.eta_weighted_integral.push(eta_int);
        rec.pp_norm.push(state.alpha_coeff.norm());
        rec.pp_bound.push(bound);
        rec.orthogonality_residual.push(state.residual[0].hypot(state.residual[1]));
        prev_z = Some(state.z);
        Ok(true)
    });
    if let Err(e) = run {
        match e {
            LabError::BlowUp { .. } => rec.truncated = Some(e.to_string()),
            other => return Err(other),
        }
    }
    let n = rec.len();
    rec.mdot_fd = vec![nan_c(); n];
    rec.ode_residual = vec![f64::NAN; n];
    for k in 1..n.saturating_sub(1) {
        let fd = (rec.m[k + 1] - rec.m[k - 1]) / (rec.times[k + 1] - rec.times[k - 1]);
        rec.mdot_fd[k] = fd;
        rec.ode_residual[k] = (fd - rec.mdot_ode[k]).norm();
    }
    rec.increments = increments_of(ctx, &scattered)?;
    rec.scattered = scattered;
    Ok(rec)
}

fn increments_of(ctx: &OperatorContext, states: &[(f64, Vec<C64>)]) -> Result<Vec<ScatteringIncrement>> {
    states
        .windows(2)
        .map(|w| {
            let diff: Vec<C64> = w[1].1.iter().zip(&w[0].1).map(|(a, b)| a - b).collect();
            Ok(ScatteringIncrement {
                t1: w[0].0,
                t2: w[1].0,
                value: sobolev_norm(ctx, &SpectralField::new(diff), 0.5, Flavor::Flat, 0.0)?,
            })
        })
        .collect()
}

/// `||P_p eta(t)||` along a record.
#[derive(Debug, Clone)]
pub struct RadiationReport {
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub max: f64,
    pub final_value: f64,
    /// `final / max`, zero for an identically vanishing series.
    pub final_over_max: f64,
    /// `max_t ||P_p eta|| / |(<i P_c eta, d_{z_j} Q>)_j|` over samples with a nonzero bound.
    pub bound_constant: f64,
}

pub fn radiation_discrete_part(record: &ModulationRecord) -> RadiationReport {
    let max = record.pp_norm.iter().copied().fold(0.0, f64::max);
    let final_value = record.pp_norm.last().copied().unwrap_or(0.0);
    let bound_constant = record
        .pp_norm
        .iter()
        .zip(&record.pp_bound)
        .filter(|(_, b)| **b > 0.0)
        .map(|(p, b)| p / b)
        .fold(0.0, f64::max);
    RadiationReport {
        times: record.times.clone(),
        norms: record.pp_norm.clone(),
        max,
        final_value,
        final_over_max: if max > 0.0 { final_value / max } else { 0.0 },
        bound_constant,
    }
}
