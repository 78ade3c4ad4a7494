//! Linear propagators, the split-step NLS integrator and the space-time
//! estimate sweeps.

mod bilinear;
pub(crate) mod estimates;

pub use bilinear::{bilinear_sweep, bilinear_sweep_free, BilinearConfig, BilinearRow, BilinearTable};
pub use estimates::{
    dispersive_decay, local_smoothing_ratio, strichartz_ratio, weighted_local_energy, DecayFit,
    Forcing,
};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::field::{l2_norm, sup_norm};
use crate::spectral::{Fourier, OperatorContext, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `H = -d^2/dx^2 + V`
    Perturbed,
    /// `H0 = -d^2/dx^2`
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    Full,
    ContinuousProjected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "strang")]
    pub scheme: Scheme,
    #[serde(default = "unit")]
    pub mu: f64,
    #[serde(default = "full")]
    pub mode: ProjectionMode,
    #[serde(default)]
    pub dealias: bool,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn strang() -> Scheme {
    Scheme::Strang
}
fn full() -> ProjectionMode {
    ProjectionMode::Full
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_final: f64, stride: usize) -> Self {
        Self {
            dt,
            t_final,
            stride,
            scheme: Scheme::Strang,
            mu: 1.0,
            mode: ProjectionMode::Full,
            dealias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(LabError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(LabError::InvalidArgument(format!(
                "t_final = {} must be >= dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.stride == 0 {
            return Err(LabError::InvalidArgument("stride must be >= 1".into()));
        }
        if !self.mu.is_finite() {
            return Err(LabError::InvalidArgument("mu must be finite".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    /// Norm-bearing runs need `stride * dt <= 0.05`.
    pub fn check_norm_resolution(&self) -> Result<()> {
        if self.stride as f64 * self.dt > 0.05 + 1e-15 {
            return Err(LabError::InvalidArgument(format!(
                "stride * dt = {} exceeds 0.05 for a norm-bearing run",
                self.stride as f64 * self.dt
            )));
        }
        Ok(())
    }
}

/// Sampled solution with conservation diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<C64>>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub sup: Vec<f64>,
    pub dt: f64,
    pub scheme: String,
    /// `2L - 2 k_max t_final` with `k_max` the largest wavenumber carrying
    /// a `1e-10` share of the initial spectrum.
    pub wraparound_margin: f64,
}

impl Trajectory {
    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.mass.first().copied().unwrap_or(0.0);
        if m0 == 0.0 {
            return 0.0;
        }
        self.mass
            .iter()
            .map(|m| (m - m0).abs() / m0)
            .fold(0.0, f64::max)
    }

    pub fn max_relative_energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        let scale = e0.abs().max(f64::MIN_POSITIVE);
        self.energy
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// `exp(-i t G) u` for `G = H` (eigenbasis) or `G = H0` (FFT).
pub fn linear_propagate(
    ctx: &OperatorContext,
    t: f64,
    field: &SpectralField,
    generator: Generator,
) -> Result<SpectralField> {
    match generator {
        Generator::Perturbed => ctx.propagate(field, t),
        Generator::Free => {
            if field.len() != ctx.len() {
                return Err(LabError::ShapeMismatch {
                    expected: ctx.len(),
                    got: field.len(),
                });
            }
            Ok(SpectralField::new(ctx.propagate_free(field.values(), t)))
        }
    }
}

/// `M = int |psi|^2`.
pub fn mass(values: &[C64], h: f64) -> f64 {
    let n = l2_norm(values, h);
    n * n
}

/// `E = 1/2 int |psi_x|^2 + 1/2 int V |psi|^2 + mu/4 int |psi|^4`.
pub fn energy(fourier: &Fourier, potential: &[f64], mu: f64, values: &[C64], h: f64) -> f64 {
    let c = fourier.forward(values);
    let n = values.len() as f64;
    let kinetic: f64 = c
        .iter()
        .zip(fourier.wavenumbers())
        .map(|(v, k)| k * k * v.norm_sqr())
        .sum::<f64>()
        * h
        / n;
    let pot: f64 = values
        .iter()
        .zip(potential)
        .map(|(v, p)| p * v.norm_sqr())
        .sum::<f64>()
        * h;
    let quartic: f64 = values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * h;
    0.5 * kinetic + 0.5 * pot + 0.25 * mu * quartic
}

/// Largest `|k|` whose Fourier coefficient exceeds `rel` times the peak.
pub fn effective_k_max(fourier: &Fourier, values: &[C64], rel: f64) -> f64 {
    let c = fourier.forward(values);
    let peak = c.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if peak == 0.0 {
        return 0.0;
    }
    c.iter()
        .zip(fourier.wavenumbers())
        .filter(|(v, _)| v.norm() > rel * peak)
        .map(|(_, k)| k.abs())
        .fold(0.0, f64::max)
}

/// Split-step stepper for the full flow `i psi_t = H psi + mu |psi|^2 psi`.
struct SplitStep<'a> {
    fourier: &'a Fourier,
    potential: &'a [f64],
    half: Vec<C64>,
    whole: Vec<C64>,
    dealias: Option<Vec<bool>>,
    mu: f64,
    dt: f64,
}

impl<'a> SplitStep<'a> {
    fn new(fourier: &'a Fourier, potential: &'a [f64], cfg: &EvolutionConfig) -> Self {
        let k = fourier.wavenumbers();
        let dt = cfg.dt;
        let half = k.iter().map(|k| C64::from_polar(1.0, -0.5 * dt * k * k)).collect();
        let whole = k.iter().map(|k| C64::from_polar(1.0, -dt * k * k)).collect();
        let dealias = cfg.dealias.then(|| {
            let kmax = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            k.iter().map(|v| v.abs() <= 2.0 / 3.0 * kmax).collect()
        });
        Self {
            fourier,
            potential,
            half,
            whole,
            dealias,
            mu: cfg.mu,
            dt,
        }
    }

    fn kinetic(&self, psi: &mut [C64], factor: &[C64]) {
        self.fourier.forward_in_place(psi);
        for (v, f) in psi.iter_mut().zip(factor) {
            *v *= f;
        }
        if let Some(mask) = &self.dealias {
            for (v, keep) in psi.iter_mut().zip(mask) {
                if !keep {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        self.fourier.inverse_in_place(psi);
    }

    fn pointwise(&self, psi: &mut [C64]) {
        for (v, p) in psi.iter_mut().zip(self.potential) {
            let phase = -self.dt * (p + self.mu * v.norm_sqr());
            *v *= C64::from_polar(1.0, phase);
        }
    }

    /// Advances `steps` Strang steps, fusing adjacent kinetic half steps.
    fn advance(&self, psi: &mut [C64], steps: usize) {
        if steps == 0 {
            return;
        }
        self.kinetic(psi, &self.half);
        for s in 0..steps {
            self.pointwise(psi);
            if s + 1 < steps {
                self.kinetic(psi, &self.whole);
            }
        }
        self.kinetic(psi, &self.half);
    }
}

/// Continuous-projected flow `i psi_t = H psi + P_c(mu |psi|^2 psi)`:
/// exact linear half steps in the eigenbasis around an implicit-midpoint
/// nonlinear step.
struct ProjectedStep<'a> {
    ctx: &'a OperatorContext,
    half: Vec<C64>,
    mu: f64,
    dt: f64,
}

impl<'a> ProjectedStep<'a> {
    fn new(ctx: &'a OperatorContext, cfg: &EvolutionConfig) -> Self {
        let half = ctx
            .eigenvalues()
            .iter()
            .map(|l| C64::from_polar(1.0, -0.5 * cfg.dt * l))
            .collect();
        Self {
            ctx,
            half,
            mu: cfg.mu,
            dt: cfg.dt,
        }
    }

    fn linear_half(&self, psi: &mut Vec<C64>) {
        let mut c = self.ctx.to_eigen(psi);
        for (v, f) in c.iter_mut().zip(&self.half) {
            *v *= f;
        }
        *psi = self.ctx.from_eigen(&c);
    }

    fn nonlinear(&self, psi: &mut [C64]) -> Result<()> {
        let start = psi.to_vec();
        let mut next = start.clone();
        for _ in 0..50 {
            let mut f: Vec<C64> = start
                .iter()
                .zip(&next)
                .map(|(a, b)| {
                    let m = 0.5 * (a + b);
                    m * (self.mu * m.norm_sqr())
                })
                .collect();
            self.ctx.project_out_point(&mut f);
            let cand: Vec<C64> = start
                .iter()
                .zip(&f)
                .map(|(a, g)| a - C64::new(0.0, self.dt) * g)
                .collect();
            let diff = cand
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let scale = cand.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            next = cand;
            if diff <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
                psi.copy_from_slice(&next);
                return Ok(());
            }
        }
        psi.copy_from_slice(&next);
        Ok(())
    }

    fn advance(&self, psi: &mut Vec<C64>, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.linear_half(psi);
            self.nonlinear(psi)?;
            self.linear_half(psi);
        }
        Ok(())
    }
}

/// Integrates the NLS and hands every output sample to `observe`; the
/// observer returns `false` to stop early.
pub fn nls_evolve_observed(
    ctx: &OperatorContext,
    psi0: &[C64],
    cfg: &EvolutionConfig,
    mut observe: impl FnMut(f64, &[C64]) -> Result<bool>,
) -> Result<()> {
    cfg.validate()?;
    if psi0.len() != ctx.len() {
        return Err(LabError::ShapeMismatch {
            expected: ctx.len(),
            got: psi0.len(),
        });
    }
    let steps = cfg.steps();
    let mut psi = psi0.to_vec();
    if !observe(0.0, &psi)? {
        return Ok(());
    }
    let split = SplitStep::new(ctx.fourier(), ctx.potential().samples(), cfg);
    let projected = (cfg.mode == ProjectionMode::ContinuousProjected).then(|| ProjectedStep::new(ctx, cfg));
    let mut done = 0usize;
    let mut last_time = 0.0;
    while done < steps {
        let chunk = cfg.stride.min(steps - done);
        match &projected {
            Some(p) => p.advance(&mut psi, chunk)?,
            None => split.advance(&mut psi, chunk),
        }
        done += chunk;
        if psi.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(LabError::BlowUp { last_time });
        }
        let t = done as f64 * cfg.dt;
        last_time = t;
        if !observe(t, &psi)? {
            break;
        }
    }
    Ok(())
}

pub fn nls_evolve(ctx: &OperatorContext, psi0: &[C64], cfg: &EvolutionConfig) -> Result<Trajectory> {
    let h = ctx.spacing();
    let kmax = effective_k_max(ctx.fourier(), psi0, 1e-10);
    let mut traj = Trajectory {
        dt: cfg.dt,
        scheme: match cfg.mode {
            ProjectionMode::Full => "strang".into(),
            ProjectionMode::ContinuousProjected => "strang-projected".into(),
        },
        wraparound_margin: ctx.grid().wraparound_margin(kmax, cfg.t_final),
        ..Default::default()
    };
    nls_evolve_observed(ctx, psi0, cfg, |t, psi| {
        traj.times.push(t);
        traj.mass.push(mass(psi, h));
        traj.energy.push(energy(ctx.fourier(), ctx.potential().samples(), cfg.mu, psi, h));
        traj.sup.push(sup_norm(psi));
        traj.fields.push(psi.to_vec());
        Ok(true)
    })?;
    Ok(traj)
}
