use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg;
use crate::spectral::OperatorContext;

/// Generalized plane waves `e(x, xi)` sampled on the grid, one column per momentum.
#[derive(Debug, Clone)]
pub struct PlaneWaveTable {
    pub momenta: Vec<f64>,
    pub columns: Vec<Vec<C64>>,
    /// Interior Helmholtz residual relative to the interior norm, per column.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    /// Relative interior residual `||(-d^2 + V - xi^2) e|| / ||e||`.
    pub residual: f64,
    /// Number of nodes in the potential support used by the solve.
    pub support: usize,
}

/// Index range carrying the potential (entries above `1e-15 max|V|`), padded by two nodes.
fn support(ctx: &OperatorContext) -> Option<(usize, usize)> {
    let v = ctx.potential().samples();
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if vmax == 0.0 {
        return None;
    }
    let thr = 1e-15 * vmax;
    let first = v.iter().position(|x| x.abs() > thr)?;
    let last = v.iter().rposition(|x| x.abs() > thr)?;
    Some((first.saturating_sub(2), (last + 2).min(v.len() - 1)))
}

/// True when the potential support stays clear of the periodic seam.
pub fn support_is_interior(ctx: &OperatorContext) -> bool {
    match support(ctx) {
        None => true,
        Some((a, b)) => a > 8 && b + 8 < ctx.len(),
    }
}

/// Outgoing free kernel `i e^{ik|x|} / (2k)` of `-d^2/dx^2 - k^2`.
fn kernel(k: f64, x: f64) -> C64 {
    C64::new(0.0, 0.5 / k) * C64::from_polar(1.0, k * x.abs())
}

/// Integral `int G(x_i - y) w(y) dy` by the trapezoid rule with end
/// corrections for the kink of `G` at `y = x_i`:
/// `T + h^2/12 J1 - h^4/720 J3`, `J1 = -w`, `J3 = -3 w'' + k^2 w`.
fn corrected_integral(xs: &[f64], w: &[C64], idx: &[usize], i: usize, k: f64, h: f64) -> C64 {
    let mut t = C64::new(0.0, 0.0);
    for &j in idx {
        t += kernel(k, xs[i] - xs[j]) * w[j];
    }
    t *= h;
    let n = w.len();
    let wi = w[i];
    let wpp = if i > 0 && i + 1 < n {
        (w[i + 1] - 2.0 * wi + w[i - 1]) / (h * h)
    } else {
        C64::new(0.0, 0.0)
    };
    t - h * h / 12.0 * wi - h.powi(4) / 720.0 * (-3.0 * wpp + k * k * wi)
}

/// Solves `e = e^{i x xi} - R0^+(xi^2)(V e)` as a dense system on the
/// potential support, then evaluates `e` on every node.
pub fn solve_plane_wave(ctx: &OperatorContext, xi: f64) -> Result<(Vec<C64>, PlaneWave)> {
    if !(xi.is_finite() && xi != 0.0) {
        return Err(LabError::InvalidArgument(format!("momentum must be nonzero, got {xi}")));
    }
    let xs = ctx.grid().nodes();
    let incident: Vec<C64> = xs.iter().map(|x| C64::from_polar(1.0, x * xi)).collect();
    let Some((a, b)) = support(ctx) else {
        return Ok((
            incident,
            PlaneWave {
                residual: 0.0,
                support: 0,
            },
        ));
    };
    if !support_is_interior(ctx) {
        return Err(LabError::RouteUnavailable(
            "potential reaches the box edge; the free outgoing kernel does not apply".into(),
        ));
    }
    let k = xi.abs();
    let h = ctx.spacing();
    let v = ctx.potential().samples();
    let m = b - a + 1;
    let idx: Vec<usize> = (a..=b).collect();
    let c_diag = -h * h / 12.0 - h.powi(4) * k * k / 720.0 - 2.0 * h * h / 240.0;
    let c_side = h * h / 240.0;
    let mat = Mat::from_fn(m, m, |p, q| {
        let (i, j) = (a + p, a + q);
        let mut g = kernel(k, xs[i] - xs[j]) * h;
        if p == q {
            g += c_diag;
        } else if p.abs_diff(q) == 1 {
            g += c_side;
        }
        let delta = if p == q { 1.0 } else { 0.0 };
        C64::new(delta, 0.0) + g * v[j]
    });
    let rhs: Vec<C64> = idx.iter().map(|&i| incident[i]).collect();
    let sol = linalg::solve_complex(&mat, &rhs, &format!("Lippmann-Schwinger at xi^2 = {}", xi * xi))
        .map_err(|_| {
            LabError::SingularSystem(format!("Lippmann-Schwinger system at energy xi^2 = {}", xi * xi))
        })?;
    let mut w = vec![C64::new(0.0, 0.0); xs.len()];
    for (p, &i) in idx.iter().enumerate() {
        w[i] = v[i] * sol[p];
    }
    let field: Vec<C64> = (0..xs.len())
        .map(|i| incident[i] - corrected_integral(&xs, &w, &idx, i, k, h))
        .collect();
    let residual = helmholtz_residual(ctx, &field, xi * xi);
    Ok((field, PlaneWave { residual, support: m }))
}

/// Eighth-order central second difference.
const D2: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

/// `||(-d^2 + V - E) e|| / ||e||` over nodes with `|x| < 0.9 L`.
pub fn helmholtz_residual(ctx: &OperatorContext, e: &[C64], energy: f64) -> f64 {
    let xs = ctx.grid().nodes();
    let h = ctx.spacing();
    let v = ctx.potential().samples();
    let lim = 0.9 * ctx.grid().half_length();
    let n = e.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 4..n.saturating_sub(4) {
        if xs[i].abs() >= lim {
            continue;
        }
        let mut lap = D2[0] * e[i];
        for (s, c) in D2.iter().enumerate().skip(1) {
            lap += *c * (e[i + s] + e[i - s]);
        }
        lap /= h * h;
        let r = -lap + (v[i] - energy) * e[i];
        num += r.norm_sqr();
        den += e[i].norm_sqr();
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Plane waves at every momentum, solved independently.
pub fn plane_wave_table(ctx: &OperatorContext, momenta: &[f64]) -> Result<PlaneWaveTable> {
    let solved: Vec<(Vec<C64>, PlaneWave)> = momenta
        .par_iter()
        .map(|&xi| solve_plane_wave(ctx, xi))
        .collect::<Result<_>>()?;
    let (columns, info): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    Ok(PlaneWaveTable {
        momenta: momenta.to_vec(),
        columns,
        residuals: info.iter().map(|p| p.residual).collect(),
    })
}
