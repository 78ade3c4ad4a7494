//! Small nonlinear ground states `H Q + mu |Q|^2 Q = E Q` bifurcating from
//! `z phi0`, their `z`-derivatives and scaling diagnostics.

mod branch;
mod interpolant;

pub use branch::{
    build_branch, loglog_slope, quartic_moment, relative_distance, scaling_report, weighted_report,
    BranchSample, GroundStateBranch, ScalingReport,
    WeightedReport,
};
pub use interpolant::{BranchInterpolant, BranchPoint};

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg;
use crate::spectral::field::l2_norm;
use crate::spectral::OperatorContext;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateOptions {
    /// Nonlinearity coefficient `mu`.
    pub mu: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            mu: 1.0,
            tolerance: 1e-12,
            max_iterations: 200,
        }
    }
}

/// Converged ground state at a complex parameter `z`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub z: C64,
    /// `Q(z)`.
    pub field: Vec<C64>,
    /// `E(z) = e0 + e(z)`.
    pub energy: f64,
    /// `e(z)`.
    pub shift: f64,
    pub iterations: usize,
    /// Relative update of the last iteration.
    pub update: f64,
    /// `||H Q + mu |Q|^2 Q - E Q||_2 / ||Q||_2`, evaluated independently with the FFT.
    pub residual: f64,
}

/// Ground state at real `r >= 0` in real arithmetic.
#[derive(Debug, Clone)]
pub(crate) struct RealGroundState {
    pub q_full: Vec<f64>,
    pub energy: f64,
    pub shift: f64,
    pub iterations: usize,
    pub update: f64,
}

pub(crate) fn bound_state(ctx: &OperatorContext) -> Result<(f64, Vec<f64>)> {
    match ctx.negative_indices().len() {
        1 => Ok((ctx.ground_energy().unwrap(), ctx.ground_state().unwrap())),
        k => Err(LabError::InvalidArgument(format!(
            "ground-state branch needs exactly one negative eigenvalue, found {k}"
        ))),
    }
}

pub(crate) fn solve_real(
    ctx: &OperatorContext,
    r: f64,
    init: Option<&[f64]>,
    opts: &GroundStateOptions,
) -> Result<RealGroundState> {
    let (e0, phi0) = bound_state(ctx)?;
    let n = ctx.len();
    let h = ctx.spacing();
    if r == 0.0 {
        return Ok(RealGroundState {
            q_full: vec![0.0; n],
            energy: e0,
            shift: 0.0,
            iterations: 0,
            update: 0.0,
        });
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(LabError::InvalidArgument(format!("modulus {r} must be positive")));
    }
    let lambda = ctx.eigenvalues();
    let u = ctx.eigenvectors().as_ref();
    let sqrt_h = h.sqrt();
    let mut q: Vec<f64> = match init {
        Some(q0) => {
            if q0.len() != n {
                return Err(LabError::ShapeMismatch {
                    expected: n,
                    got: q0.len(),
                });
            }
            // keep only the continuous part of the initial correction
            let mut c = linalg::real_matvec(u, true, q0);
            c[0] = 0.0;
            linalg::real_matvec(u, false, &c)
        }
        None => vec![0.0; n],
    };
    let mut shift = 0.0;
    let mut update = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let big: Vec<f64> = phi0.iter().zip(&q).map(|(p, qq)| r * p + qq).collect();
        let nonlin: Vec<f64> = big.iter().map(|v| opts.mu * v * v * v).collect();
        let proj: f64 = phi0.iter().zip(&nonlin).map(|(a, b)| a * b).sum::<f64>() * h;
        let new_shift = proj / r;
        let energy = e0 + new_shift;
        // coefficients of N(Q) in the l2 eigenbasis, continuum normalization folded in
        let mut c = linalg::real_matvec(u, true, &nonlin);
        c[0] = 0.0;
        for k in 1..n {
            let d = lambda[k] - energy;
            if d.abs() < 1e-14 * lambda[k].abs().max(1.0) {
                return Err(LabError::SingularSystem(format!(
                    "H - E is singular on the continuous subspace at E = {energy}"
                )));
            }
            c[k] = -c[k] / d;
        }
        let q_new = linalg::real_matvec(u, false, &c);
        let dq: f64 = q_new
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let qn: f64 = q_new.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = (r / sqrt_h).max(qn);
        update = (dq / scale).max((new_shift - shift).abs() / new_shift.abs().max(f64::MIN_POSITIVE));
        if !update.is_finite() {
            return Err(LabError::NonConvergence {
                what: format!("ground state at |z| = {r}"),
                residual: update,
            });
        }
        q = q_new;
        shift = new_shift;
        if update < opts.tolerance {
            let q_full = phi0.iter().zip(&q).map(|(p, qq)| r * p + qq).collect();
            return Ok(RealGroundState {
                q_full,
                energy: e0 + shift,
                shift,
                iterations: it,
                update,
            });
        }
    }
    Err(LabError::NonConvergence {
        what: format!("ground state at |z| = {r}"),
        residual: update,
    })
}

/// `||H Q + mu |Q|^2 Q - E Q|| / ||Q||`.
pub fn elliptic_residual(ctx: &OperatorContext, q_full: &[C64], energy: f64, mu: f64) -> f64 {
    let hq = ctx.apply_hamiltonian(q_full);
    let r: Vec<C64> = hq
        .iter()
        .zip(q_full)
        .map(|(a, q)| a + q * (mu * q.norm_sqr()) - q * energy)
        .collect();
    let qn = l2_norm(q_full, ctx.spacing());
    if qn == 0.0 {
        return 0.0;
    }
    l2_norm(&r, ctx.spacing()) / qn
}

/// Fixed-point solve at real `|z|` followed by a gauge rotation.
pub fn solve_ground_state(
    ctx: &OperatorContext,
    z: C64,
    init: Option<&[C64]>,
    opts: &GroundStateOptions,
) -> Result<GroundState> {
    let r = z.norm();
    let phase = if r > 0.0 { z / r } else { C64::new(1.0, 0.0) };
    let init_real: Option<Vec<f64>> = init.map(|f| {
        let (_, phi0) = bound_state(ctx).unwrap_or((0.0, vec![0.0; f.len()]));
        f.iter()
            .zip(&phi0)
            .map(|(v, p)| (v / phase).re - r * p)
            .collect()
    });
    let g = solve_real(ctx, r, init_real.as_deref(), opts)?;
    let field: Vec<C64> = g.q_full.iter().map(|&v| phase * v).collect();
    let residual = elliptic_residual(ctx, &field, g.energy, opts.mu);
    Ok(GroundState {
        z,
        field,
        energy: g.energy,
        shift: g.shift,
        iterations: g.iterations,
        update: g.update,
        residual,
    })
}

/// First derivatives of the branch at real `r > 0`.
#[derive(Debug, Clone)]
pub struct BranchDerivative {
    /// `d Q / d z1` (real field at real `z`).
    pub dq1: Vec<f64>,
    /// `d Q / d z2 = i w`; this stores `w`.
    pub dq2_imag: Vec<f64>,
    /// `(d e / d z1, d e / d z2)`.
    pub de: [f64; 2],
}

/// Bordered solves for `(D_z Q, D_z e)` at real `r`.
///
/// Direction 1: `(H + 3 mu Q^2 - E) q' - s Q = -(3 mu Q^2 - e) phi0`, `<phi0, q'> = 0`.
/// Direction 2 (imaginary): the same with `mu Q^2` in place of `3 mu Q^2`.
/// Then `D_1 Q = phi0 + q'`, `D_1 e = s`.
pub fn differentiate_real(
    ctx: &OperatorContext,
    r: f64,
    q_full: &[f64],
    energy: f64,
    mu: f64,
) -> Result<BranchDerivative> {
    let (e0, phi0) = bound_state(ctx)?;
    let n = ctx.len();
    let h = ctx.spacing();
    if r == 0.0 {
        return Ok(BranchDerivative {
            dq1: phi0.clone(),
            dq2_imag: phi0,
            de: [0.0, 0.0],
        });
    }
    let shift = energy - e0;
    let ham = ctx.hamiltonian();
    let mut out = Vec::with_capacity(2);
    for factor in [3.0, 1.0] {
        let a = Mat::from_fn(n + 1, n + 1, |i, j| {
            if i < n && j < n {
                let d = if i == j {
                    factor * mu * q_full[i] * q_full[i] - energy
                } else {
                    0.0
                };
                ham[(i, j)] + d
            } else if i < n {
                -q_full[i]
            } else if j < n {
                h * phi0[j]
            } else {
                0.0
            }
        });
        let mut b: Vec<f64> = (0..n)
            .map(|i| -(factor * mu * q_full[i] * q_full[i] - shift) * phi0[i])
            .collect();
        b.push(0.0);
        let x = linalg::solve_real(&a, &b, "bordered branch derivative")?;
        let dq: Vec<f64> = (0..n).map(|i| phi0[i] + x[i]).collect();
        out.push((dq, x[n]));
    }
    let (dq2, s2) = out.pop().unwrap();
    let (dq1, s1) = out.pop().unwrap();
    if !(s1.is_finite() && s2.is_finite()) {
        return Err(LabError::SingularSystem("bordered branch derivative".into()));
    }
    Ok(BranchDerivative {
        dq1,
        dq2_imag: dq2,
        de: [s1, s2],
    })
}

/// Derivative pair `(D_{z1} Q, D_{z2} Q)` at complex `z`, rotated from real `|z|`.
pub fn rotate_derivative(d: &BranchDerivative, z: C64) -> [Vec<C64>; 2] {
    let r = z.norm();
    let (c, s) = if r > 0.0 { (z.re / r, z.im / r) } else { (1.0, 0.0) };
    let phase = C64::new(c, s);
    let d1: Vec<C64> = d
        .dq1
        .iter()
        .zip(&d.dq2_imag)
        .map(|(&a, &b)| phase * C64::new(c * a, -s * b))
        .collect();
    let d2: Vec<C64> = d
        .dq1
        .iter()
        .zip(&d.dq2_imag)
        .map(|(&a, &b)| phase * C64::new(s * a, c * b))
        .collect();
    [d1, d2]
}
