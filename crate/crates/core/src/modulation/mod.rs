//! Ground state plus radiation: `psi = Q(z) + eta` with
//! `<i eta, d_{z1} Q> = <i eta, d_{z2} Q> = 0` in the real pairing
//! `<u, v> = Re int u conj(v)`, and the modulation equation for `z`.
//!
//! Writing `w = z' + i E(z) z`, the flow `i psi_t = H psi + mu |psi|^2 psi`
//! together with the orthogonality conditions gives
//!
//! ```text
//! A(z, eta) w = (<F, d_{z1} Q>, <F, d_{z2} Q>)
//! A_jk = <i d_k Q, d_j Q> - <i eta, d_j d_k Q>
//! F = mu (2 Q |eta|^2 + conj(Q) eta^2 + |eta|^2 eta)
//! ```
//!
//! so `A(0, 0) = [[0, -1], [1, 0]]` and `m = z exp(i int E)` has `m' = w exp(i int E)`.

mod experiment;

pub use experiment::{
    prepare_data, radiation_discrete_part, stability_experiment, BumpRecipe, DataRecipe,
    ModulationRecord, ModulationSummary, PreparedData, RadiationReport, RandomComponent,
    ScatteringIncrement, StabilityConfig,
};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::groundstate::{BranchInterpolant, BranchPoint};
use crate::spectral::field::{inner, l2_norm, real_inner};
use crate::spectral::OperatorContext;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeOptions {
    /// Bound on `|G(z)|` for the orthogonality residual.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
        }
    }
}

/// Which nonlinear remainder enters the modulation equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderForm {
    /// `N(Q + eta) - N(Q) - mu (2 |Q|^2 eta + Q^2 conj(eta))`, quadratic in `eta`.
    #[default]
    Exact,
    /// `P_c(N(Q + eta) - mu |Q|^2 eta - mu Q^2 conj(eta))`; linear in `eta` and
    /// not consistent with the flow, kept for comparison.
    Displayed,
}

#[derive(Debug, Clone)]
pub struct ModulationState {
    pub z: C64,
    pub energy: f64,
    pub eta: Vec<C64>,
    /// `P_c eta` minus the supplied linear part.
    pub nu: Vec<C64>,
    /// `<eta, phi0>` in the complex pairing.
    pub alpha_coeff: C64,
    pub residual: [f64; 2],
    pub iterations: usize,
}

fn orthogonality(eta: &[C64], p: &BranchPoint, h: f64) -> [f64; 2] {
    let ieta: Vec<C64> = eta.iter().map(|v| I * v).collect();
    [real_inner(&ieta, &p.dq[0], h), real_inner(&ieta, &p.dq[1], h)]
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-14 * scale * scale) {
        return None;
    }
    Some([
        (b[0] * a[1][1] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - b[0] * a[1][0]) / det,
    ])
}

/// 2-norm condition number of a 2x2 matrix.
pub fn condition_number(a: [[f64; 2]; 2]) -> f64 {
    let f = a.iter().flatten().map(|v| v * v).sum::<f64>();
    let det = (a[0][0] * a[1][1] - a[0][1] * a[1][0]).abs();
    let disc = (f * f - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((f + disc) / 2.0).sqrt();
    let smin2 = (f - disc) / 2.0;
    if smin2 <= 0.0 || det == 0.0 {
        return f64::INFINITY;
    }
    // smin from det / smax is stabler than the square root of the difference
    smax / (det / smax)
}

fn phi0(ctx: &OperatorContext) -> Result<Vec<f64>> {
    ctx.ground_state()
        .ok_or_else(|| LabError::InvalidArgument("modulation needs a bound state".into()))
}

/// Newton solve for `z` from `G(z) = (<i(psi - Q(z)), d_{z_j} Q>)_j = 0`.
///
/// `guess` defaults to `<psi, phi0>`; `linear` (same length as `psi`) is
/// subtracted from `P_c eta` to form `nu`.
pub fn decompose(
    ctx: &OperatorContext,
    branch: &BranchInterpolant,
    psi: &[C64],
    guess: Option<C64>,
    linear: Option<&[C64]>,
    opts: &DecomposeOptions,
) -> Result<ModulationState> {
    let n = ctx.len();
    if psi.len() != n {
        return Err(LabError::ShapeMismatch { expected: n, got: psi.len() });
    }
    if let Some(l) = linear {
        if l.len() != n {
            return Err(LabError::ShapeMismatch { expected: n, got: l.len() });
        }
    }
    let h = ctx.spacing();
    let phi = phi0(ctx)?;
    let phic: Vec<C64> = phi.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut z = guess.unwrap_or_else(|| inner(psi, &phic, h));
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let p = branch.evaluate(z, true)?;
        let eta: Vec<C64> = psi.iter().zip(&p.q).map(|(a, b)| a - b).collect();
        let g = orthogonality(&eta, &p, h);
        let ddq = p.ddq.as_ref().expect("second derivatives requested");
        let ieta: Vec<C64> = eta.iter().map(|v| I * v).collect();
        let dd = |j: usize, k: usize| &ddq[j + k];
        let mut jac = [[0.0; 2]; 2];
        for (j, row) in jac.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                let idq: Vec<C64> = p.dq[k].iter().map(|x| I * x).collect();
                *v = -real_inner(&idq, &p.dq[j], h) + real_inner(&ieta, dd(j, k), h);
            }
        }
        let step = solve2(jac, [-g[0], -g[1]]).ok_or_else(|| LabError::NonConvergence {
            what: "decomposition (singular Jacobian)".into(),
            residual: g[0].hypot(g[1]),
        })?;
        let dz = C64::new(step[0], step[1]);
        let res = g[0].hypot(g[1]);
        last = res;
        if res <= opts.tolerance && dz.norm() <= 1e-13 * z.norm().max(1e-12) {
            let alpha_coeff = inner(&eta, &phic, h);
            let nu: Vec<C64> = eta
                .iter()
                .zip(&phi)
                .enumerate()
                .map(|(i, (e, f))| e - alpha_coeff * f - linear.map_or(C64::new(0.0, 0.0), |l| l[i]))
                .collect();
            return Ok(ModulationState {
                z,
                energy: p.energy,
                eta,
                nu,
                alpha_coeff,
                residual: g,
                iterations: it,
            });
        }
        if !res.is_finite() {
            break;
        }
        z += dz;
    }
    Err(LabError::NonConvergence {
        what: "decomposition".into(),
        residual: last,
    })
}

/// `R(z) u = u + alpha phi0` with complex `alpha` fixed by the orthogonality conditions.
#[derive(Debug, Clone)]
pub struct RAction {
    pub field: Vec<C64>,
    pub alpha: C64,
}

pub fn r_operator(ctx: &OperatorContext, branch: &BranchInterpolant, z: C64, u: &[C64]) -> Result<RAction> {
    let n = ctx.len();
    if u.len() != n {
        return Err(LabError::ShapeMismatch { expected: n, got: u.len() });
    }
    let h = ctx.spacing();
    let phi = phi0(ctx)?;
    let phic: Vec<C64> = phi.iter().map(|&v| C64::new(v, 0.0)).collect();
    let point_part = inner(u, &phic, h).norm();
    let un = l2_norm(u, h);
    if point_part > 1e-10 * un.max(f64::MIN_POSITIVE) {
        return Err(LabError::InvalidArgument(format!(
            "R(z) acts on the continuous subspace; |<u, phi0>| = {point_part:.3e}"
        )));
    }
    let p = branch.evaluate(z, false)?;
    let iu: Vec<C64> = u.iter().map(|v| I * v).collect();
    let b = [real_inner(&iu, &p.dq[0], h), real_inner(&iu, &p.dq[1], h)];
    let basis = [I * C64::new(1.0, 0.0), I * I];
    let mut m = [[0.0; 2]; 2];
    for (j, row) in m.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            let f: Vec<C64> = phi.iter().map(|&x| basis[k] * x).collect();
            *v = real_inner(&f, &p.dq[j], h);
        }
    }
    let a = solve2(m, [-b[0], -b[1]])
        .ok_or_else(|| LabError::SingularSystem(format!("R(z) system at |z| = {}", z.norm())))?;
    let alpha = C64::new(a[0], a[1]);
    let field = u.iter().zip(&phi).map(|(v, f)| v + alpha * f).collect();
    Ok(RAction { field, alpha })
}

/// Right side of the modulation equation at one state.
#[derive(Debug, Clone)]
pub struct ModulationRhs {
    /// `w = z' + i E(z) z`.
    pub w: C64,
    pub a: [[f64; 2]; 2],
    pub condition: f64,
    /// `(<F, d_{z1} Q>, <F, d_{z2} Q>)`.
    pub forcing: [f64; 2],
    pub remainder_norm: f64,
}

impl ModulationRhs {
    /// `m'` given the accumulated phase `theta = int E`.
    pub fn mdot(&self, theta: f64) -> C64 {
        self.w * C64::from_polar(1.0, theta)
    }
}

pub fn remainder(ctx: &OperatorContext, q: &[C64], eta: &[C64], mu: f64, form: RemainderForm) -> Vec<C64> {
    match form {
        RemainderForm::Exact => q
            .iter()
            .zip(eta)
            .map(|(&q, &e)| mu * (2.0 * q * e.norm_sqr() + q.conj() * e * e + e.norm_sqr() * e))
            .collect(),
        RemainderForm::Displayed => {
            let mut f: Vec<C64> = q
                .iter()
                .zip(eta)
                .map(|(&q, &e)| {
                    let s = q + e;
                    mu * (s.norm_sqr() * s - q.norm_sqr() * e - q * q * e.conj())
                })
                .collect();
            ctx.project_out_point(&mut f);
            f
        }
    }
}

pub(crate) fn rhs_at(
    ctx: &OperatorContext,
    p: &BranchPoint,
    eta: &[C64],
    mu: f64,
    form: RemainderForm,
) -> Result<ModulationRhs> {
    let h = ctx.spacing();
    let ddq = p
        .ddq
        .as_ref()
        .ok_or_else(|| LabError::InvalidArgument("second branch derivatives required".into()))?;
    let ieta: Vec<C64> = eta.iter().map(|v| I * v).collect();
    let mut a = [[0.0; 2]; 2];
    for (j, row) in a.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            let idq: Vec<C64> = p.dq[k].iter().map(|x| I * x).collect();
            *v = real_inner(&idq, &p.dq[j], h) - real_inner(&ieta, &ddq[j + k], h);
        }
    }
    let condition = condition_number(a);
    if !(condition <= 1e3) {
        return Err(LabError::IllConditioned { condition });
    }
    let f = remainder(ctx, &p.q, eta, mu, form);
    let forcing = [real_inner(&f, &p.dq[0], h), real_inner(&f, &p.dq[1], h)];
    let w = solve2(a, forcing).ok_or(LabError::IllConditioned { condition: f64::INFINITY })?;
    Ok(ModulationRhs {
        w: C64::new(w[0], w[1]),
        a,
        condition,
        forcing,
        remainder_norm: l2_norm(&f, h),
    })
}

pub fn modulation_rhs(
    ctx: &OperatorContext,
    branch: &BranchInterpolant,
    z: C64,
    eta: &[C64],
    form: RemainderForm,
) -> Result<ModulationRhs> {
    if eta.len() != ctx.len() {
        return Err(LabError::ShapeMismatch { expected: ctx.len(), got: eta.len() });
    }
    let p = branch.evaluate(z, true)?;
    rhs_at(ctx, &p, eta, branch.mu(), form)
}
