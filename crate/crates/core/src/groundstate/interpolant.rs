use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::{bound_state, solve_real, GroundStateOptions};
use crate::error::{LabError, Result};
use crate::spectral::OperatorContext;

/// Chebyshev interpolant of the branch in `s = |z|^2`.
///
/// By gauge covariance `Q(z) = z G(|z|^2)` and `E(z) = E(|z|^2)` with `G` and
/// `E` smooth in `s`, so first and second `z`-derivatives follow from `G`,
/// `G'`, `G''` by the chain rule.
#[derive(Debug, Clone)]
pub struct BranchInterpolant {
    s_max: f64,
    /// Chebyshev coefficients of `G`, `G'`, `G''` (one field per degree).
    g: [Vec<Vec<f64>>; 3],
    /// Chebyshev coefficients of `E`, `E'`, `E''`.
    e: [Vec<f64>; 3],
    tail: f64,
    mu: f64,
}

/// Ground state, energy and `z`-derivatives at one complex parameter.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub z: C64,
    pub q: Vec<C64>,
    pub energy: f64,
    /// `(d_{z1} Q, d_{z2} Q)`.
    pub dq: [Vec<C64>; 2],
    /// `(d_{z1} E, d_{z2} E)`.
    pub de: [f64; 2],
    /// `d_j d_k Q` in the order `11, 12, 22`.
    pub ddq: Option<[Vec<C64>; 3]>,
}

fn cheb_derivative(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let deg = c.len();
    let n = c[0].len();
    let mut d = vec![vec![0.0; n]; deg];
    if deg < 2 {
        return d;
    }
    for j in (1..deg).rev() {
        let (lo, hi) = d.split_at_mut(j);
        let next: Option<&Vec<f64>> = hi.get(1);
        for i in 0..n {
            let up = next.map(|v| v[i]).unwrap_or(0.0);
            lo[j - 1][i] = up + 2.0 * j as f64 * c[j][i];
        }
    }
    for v in d[0].iter_mut() {
        *v *= 0.5;
    }
    d
}

fn cheb_values(c: &[Vec<f64>], x: f64, out: &mut [f64]) {
    // Clenshaw recurrence applied componentwise
    let n = out.len();
    let mut b1 = vec![0.0; n];
    let mut b2 = vec![0.0; n];
    for j in (1..c.len()).rev() {
        for i in 0..n {
            let b0 = 2.0 * x * b1[i] - b2[i] + c[j][i];
            b2[i] = b1[i];
            b1[i] = b0;
        }
    }
    for i in 0..n {
        out[i] = x * b1[i] - b2[i] + c[0][i];
    }
}

fn scalar(c: &[f64]) -> Vec<Vec<f64>> {
    c.iter().map(|&v| vec![v]).collect()
}

impl BranchInterpolant {
    /// Solves the ground state at `nodes` Chebyshev points of `s` in `[0, radius^2]`.
    pub fn build(
        ctx: &OperatorContext,
        radius: f64,
        nodes: usize,
        opts: &GroundStateOptions,
    ) -> Result<Self> {
        if !(radius > 0.0) || nodes < 4 {
            return Err(LabError::InvalidArgument(format!(
                "interpolant needs radius > 0 and >= 4 nodes, got {radius}, {nodes}"
            )));
        }
        let (_, phi0) = bound_state(ctx)?;
        let s_max = radius * radius;
        let xs: Vec<f64> = (0..nodes)
            .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64).cos())
            .collect();
        let samples: Vec<(Vec<f64>, f64)> = xs
            .par_iter()
            .map(|&x| {
                let s = 0.5 * s_max * (x + 1.0);
                let r = s.sqrt();
                let g = solve_real(ctx, r, None, opts)?;
                let field = if r > 0.0 {
                    g.q_full.iter().map(|v| v / r).collect()
                } else {
                    phi0.clone()
                };
                Ok((field, g.energy))
            })
            .collect::<Result<_>>()?;
        let n = ctx.len();
        let mut gc = vec![vec![0.0; n]; nodes];
        let mut ec = vec![0.0; nodes];
        for (j, (gj, ej)) in gc.iter_mut().zip(ec.iter_mut()).enumerate() {
            for (i, &x) in xs.iter().enumerate() {
                let t = (j as f64 * x.acos()).cos();
                for (a, b) in gj.iter_mut().zip(&samples[i].0) {
                    *a += t * b;
                }
                *ej += t * samples[i].1;
            }
            let w = if j == 0 { 1.0 } else { 2.0 } / nodes as f64;
            gj.iter_mut().for_each(|v| *v *= w);
            *ej *= w;
        }
        let tail = gc[nodes - 1].iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + gc[nodes - 2].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g1 = cheb_derivative(&gc);
        let g2 = cheb_derivative(&g1);
        let e0 = scalar(&ec);
        let e1 = cheb_derivative(&e0);
        let e2 = cheb_derivative(&e1);
        let flat = |v: Vec<Vec<f64>>| v.into_iter().map(|x| x[0]).collect::<Vec<f64>>();
        Ok(Self {
            s_max,
            g: [gc, g1, g2],
            e: [ec, flat(e1), flat(e2)],
            tail,
            mu: opts.mu,
        })
    }

    pub fn radius(&self) -> f64 {
        self.s_max.sqrt()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Size of the two highest Chebyshev coefficients of `G` (resolution proxy).
    pub fn tail(&self) -> f64 {
        self.tail
    }

    fn x_of(&self, s: f64) -> f64 {
        2.0 * s / self.s_max - 1.0
    }

    /// `(G, G', G'')` at `s` with derivatives in `s`.
    pub fn profile(&self, s: f64) -> [Vec<f64>; 3] {
        let x = self.x_of(s);
        let n = self.g[0][0].len();
        let scale = 2.0 / self.s_max;
        let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (k, o) in out.iter_mut().enumerate() {
            cheb_values(&self.g[k], x, o);
            let f = scale.powi(k as i32);
            o.iter_mut().for_each(|v| *v *= f);
        }
        out
    }

    /// `(E, E', E'')` at `s`.
    pub fn energy_profile(&self, s: f64) -> [f64; 3] {
        let x = self.x_of(s);
        let scale = 2.0 / self.s_max;
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let c = scalar(&self.e[k]);
            let mut v = [0.0];
            cheb_values(&c, x, &mut v);
            *o = v[0] * scale.powi(k as i32);
        }
        out
    }

    pub fn energy(&self, z: C64) -> Result<f64> {
        self.check(z)?;
        Ok(self.energy_profile(z.norm_sqr())[0])
    }

    fn check(&self, z: C64) -> Result<()> {
        let s = z.norm_sqr();
        if !(s <= self.s_max * (1.0 + 1e-12)) {
            return Err(LabError::BranchRange {
                modulus: z.norm(),
                radius: self.radius(),
            });
        }
        Ok(())
    }

    /// Evaluates `Q`, `E` and derivatives; second derivatives only when asked.
    pub fn evaluate(&self, z: C64, second: bool) -> Result<BranchPoint> {
        self.check(z)?;
        let s = z.norm_sqr();
        let [g, gs, gss] = self.profile(s);
        let [energy, es, _] = self.energy_profile(s);
        let zc = [z.re, z.im];
        let unit = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let q: Vec<C64> = g.iter().map(|&v| z * v).collect();
        let dq: [Vec<C64>; 2] = std::array::from_fn(|j| {
            let a = 2.0 * zc[j] * z;
            g.iter()
                .zip(&gs)
                .map(|(&g0, &g1)| unit[j] * g0 + a * g1)
                .collect()
        });
        let de = [2.0 * zc[0] * es, 2.0 * zc[1] * es];
        let ddq = if second {
            let pairs = [(0usize, 0usize), (0, 1), (1, 1)];
            Some(pairs.map(|(j, k)| {
                let a = 2.0 * (unit[j] * zc[k] + unit[k] * zc[j])
                    + if j == k { 2.0 * z } else { C64::new(0.0, 0.0) };
                let b = 4.0 * z * zc[j] * zc[k];
                gs.iter()
                    .zip(&gss)
                    .map(|(&g1, &g2)| a * g1 + b * g2)
                    .collect()
            }))
        } else {
            None
        };
        Ok(BranchPoint {
            z,
            q,
            energy,
            dq,
            de,
            ddq,
        })
    }
}
