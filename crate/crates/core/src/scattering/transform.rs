use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::lippmann::{plane_wave_table, support_is_interior};
use crate::error::{LabError, Result};
use crate::spectral::{OperatorContext, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Eigenbasis,
    LippmannSchwinger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformOptions {
    /// Keep only momenta with `|xi| <= xi_max`.
    pub xi_max: Option<f64>,
    /// Relative eigenvalue spread below which a level pair is rotated into
    /// momentum eigenstates.
    pub cluster_tolerance: f64,
    /// Relative spread below which two levels are treated as a `+-xi` pair.
    pub pair_tolerance: f64,
    pub split_pairs: SplitPairs,
}

/// Treatment of level pairs that a reflecting potential splits on the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPairs {
    /// Keep the exact eigenvectors with alternating `+xi, -xi` labels; the
    /// transform diagonalizes `H` exactly but the labels carry no direction.
    #[default]
    Standing,
    /// Pair neighbouring levels coupled by `-i d/dx` and rotate each pair into
    /// momentum eigenstates at the mean energy; `H` is then diagonal only up
    /// to the pair splitting.
    Travelling,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            xi_max: None,
            cluster_tolerance: 1e-10,
            pair_tolerance: 1e-5,
            split_pairs: SplitPairs::Standing,
        }
    }
}

/// Distorted Fourier transform on the box: `(F u)(xi_j) = <u, psi_j>` with
/// `psi_j` continuum-normalized generalized eigenfunctions, `H psi_j = xi_j^2 psi_j`.
#[derive(Debug, Clone)]
pub struct DistortedTransform {
    route: Route,
    momenta: Vec<f64>,
    /// Column `j` holds `psi_j` on the grid.
    synthesis: Mat<C64>,
    spacing: f64,
}

/// Runs of continuous-spectrum indices whose eigenvalues coincide within tolerance.
fn clusters(ctx: &OperatorContext, tol: f64) -> Vec<Vec<usize>> {
    let lam = ctx.eigenvalues();
    let mut idx: Vec<usize> = (0..lam.len()).filter(|&k| lam[k] >= 0.0).collect();
    idx.sort_by(|&a, &b| lam[a].total_cmp(&lam[b]));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for k in idx {
        match out.last_mut() {
            Some(c) if (lam[k] - lam[c[0]]).abs() <= tol * lam[k].abs().max(1.0) => c.push(k),
            _ => out.push(vec![k]),
        }
    }
    out
}

fn cluster_energy(ctx: &OperatorContext, c: &[usize]) -> f64 {
    c.iter().map(|&k| ctx.eigenvalues()[k]).sum::<f64>() / c.len() as f64
}

impl DistortedTransform {
    pub fn route(&self) -> Route {
        self.route
    }

    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    /// Energy coordinate `xi^2` of each row.
    pub fn energies(&self) -> Vec<f64> {
        self.momenta.iter().map(|x| x * x).collect()
    }

    pub fn len(&self) -> usize {
        self.momenta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.momenta.is_empty()
    }

    /// Grid values of the generalized eigenfunction in row `j`.
    pub fn eigenfunction(&self, j: usize) -> Vec<C64> {
        (0..self.synthesis.nrows()).map(|i| self.synthesis[(i, j)]).collect()
    }

    /// Quadrature-weighted forward matrix `h conj(psi_j(x_i))`, rows by momentum.
    pub fn forward_matrix(&self) -> Mat<C64> {
        let h = self.spacing;
        Mat::from_fn(self.synthesis.ncols(), self.synthesis.nrows(), |j, i| {
            self.synthesis[(i, j)].conj() * h
        })
    }

    /// Synthesis (adjoint) matrix, columns by momentum.
    pub fn adjoint_matrix(&self) -> &Mat<C64> {
        &self.synthesis
    }

    pub fn forward(&self, values: &[C64]) -> Result<Vec<C64>> {
        let n = self.synthesis.nrows();
        if values.len() != n {
            return Err(LabError::ShapeMismatch {
                expected: n,
                got: values.len(),
            });
        }
        let col = faer::ColRef::from_slice(values);
        let y: faer::Col<C64> = self.synthesis.adjoint() * col;
        Ok((0..y.nrows()).map(|j| y[j] * self.spacing).collect())
    }

    pub fn adjoint(&self, coefficients: &[C64]) -> Result<Vec<C64>> {
        let m = self.synthesis.ncols();
        if coefficients.len() != m {
            return Err(LabError::ShapeMismatch {
                expected: m,
                got: coefficients.len(),
            });
        }
        let col = faer::ColRef::from_slice(coefficients);
        let y: faer::Col<C64> = &self.synthesis * col;
        Ok((0..y.nrows()).map(|i| y[i]).collect())
    }

    /// `||F F^dagger - I||_max` on the momentum side.
    pub fn coisometry_defect(&self) -> f64 {
        let g: Mat<C64> = self.synthesis.adjoint() * &self.synthesis;
        let m = g.nrows();
        let mut worst = 0.0f64;
        for j in 0..m {
            for i in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] * self.spacing - target).norm());
            }
        }
        worst
    }
}

/// Builds the transform by the chosen route. The eigenbasis route labels each
/// degenerate cluster by diagonalizing `-i d/dx` inside it; the Lippmann-Schwinger
/// route solves for plane waves at the same box momenta and orthonormalizes
/// each `+-xi` pair.
pub fn build_transform(
    ctx: &OperatorContext,
    route: Route,
    opts: &TransformOptions,
) -> Result<DistortedTransform> {
    let keep = |e: f64| opts.xi_max.map_or(true, |x| e.max(0.0).sqrt() <= x);
    let mut groups: Vec<Vec<usize>> = clusters(ctx, opts.pair_tolerance);
    if route == Route::Eigenbasis && opts.split_pairs == SplitPairs::Travelling {
        groups = travelling_pairs(ctx, groups, opts.cluster_tolerance);
    }
    let groups: Vec<Vec<usize>> = groups.into_iter().filter(|c| keep(cluster_energy(ctx, c))).collect();
    let tight = match opts.split_pairs {
        SplitPairs::Standing => opts.cluster_tolerance,
        SplitPairs::Travelling => f64::INFINITY,
    };
    match route {
        Route::Eigenbasis => eigen_route(ctx, &groups, tight),
        Route::LippmannSchwinger => ls_route(ctx, &groups),
    }
}

/// Regroups every level outside a degenerate cluster: consecutive levels `a, b`
/// become a pair when `|<psi_a, -i d/dx psi_b>| > xi / 2`, matched greedily by
/// coupling strength.
fn travelling_pairs(ctx: &OperatorContext, groups: Vec<Vec<usize>>, tight: f64) -> Vec<Vec<usize>> {
    let n = ctx.len();
    let u = ctx.eigenvectors();
    let lam = ctx.eigenvalues();
    let (mut out, loose): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
        groups.into_iter().partition(|c| c.len() > 1 && spread(ctx, c) <= tight);
    let mut free: Vec<usize> = loose.into_iter().flatten().collect();
    free.sort_by(|&a, &b| lam[a].total_cmp(&lam[b]));
    let column = |k: usize| -> Vec<C64> { (0..n).map(|i| C64::new(u[(i, k)], 0.0)).collect() };
    let mut edges: Vec<(f64, usize)> = free
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let xi = (0.5 * (lam[w[0]] + lam[w[1]])).max(0.0).sqrt();
            if xi == 0.0 {
                return None;
            }
            let d = ctx.fourier().derivative(&column(w[1]));
            let p: C64 = column(w[0]).iter().zip(&d).map(|(a, b)| a * b).sum();
            let c = p.norm() / xi;
            (c > 0.5).then_some((c, i))
        })
        .collect();
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut used = vec![false; free.len()];
    for (_, i) in edges {
        if !used[i] && !used[i + 1] {
            used[i] = true;
            used[i + 1] = true;
            out.push(vec![free[i], free[i + 1]]);
        }
    }
    out.extend(free.iter().zip(&used).filter(|(_, &u)| !u).map(|(&k, _)| vec![k]));
    out.sort_by(|a, b| cluster_energy(ctx, a).total_cmp(&cluster_energy(ctx, b)));
    out
}

fn spread(ctx: &OperatorContext, c: &[usize]) -> f64 {
    let lam = ctx.eigenvalues();
    let lo = c.iter().map(|&k| lam[k]).fold(f64::INFINITY, f64::min);
    let hi = c.iter().map(|&k| lam[k]).fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / hi.abs().max(1.0)
}

fn eigen_route(ctx: &OperatorContext, groups: &[Vec<usize>], tight: f64) -> Result<DistortedTransform> {
    let n = ctx.len();
    let h = ctx.spacing();
    let u = ctx.eigenvectors();
    let scale = 1.0 / h.sqrt();
    let mut momenta = Vec::new();
    let mut cols: Vec<Vec<C64>> = Vec::new();
    for c in groups {
        let e = cluster_energy(ctx, c);
        let e = if e <= 1e-10 { 0.0 } else { e.sqrt() };
        let basis: Vec<Vec<C64>> = c
            .iter()
            .map(|&k| (0..n).map(|i| C64::new(u[(i, k)] * scale, 0.0)).collect())
            .collect();
        if c.len() == 1 {
            let p = momentum_expectation(ctx, &basis[0]);
            momenta.push(if p < 0.0 { -e } else { e });
            cols.push(basis[0].clone());
            continue;
        }
        if spread(ctx, c) > tight {
            // split standing-wave pair: keep the exact eigenvectors, label them +xi, -xi
            for (j, (&k, b)) in c.iter().zip(basis).enumerate() {
                let e = ctx.eigenvalues()[k].max(0.0).sqrt();
                momenta.push(if j % 2 == 0 { e } else { -e });
                cols.push(b);
            }
            continue;
        }
        let s = c.len();
        let derivs: Vec<Vec<C64>> = basis.iter().map(|b| ctx.fourier().derivative(b)).collect();
        let p = Mat::from_fn(s, s, |a, b| {
            let v: C64 = basis[a]
                .iter()
                .zip(&derivs[b])
                .map(|(x, d)| x.conj() * d * C64::new(0.0, -1.0))
                .sum();
            v * h
        });
        let p = Mat::from_fn(s, s, |a, b| 0.5 * (p[(a, b)] + p[(b, a)].conj()));
        let evd = p
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| LabError::Eigensolver(format!("{e:?}")))?;
        for j in 0..s {
            let pj = evd.S()[j].re;
            let mut col = vec![C64::new(0.0, 0.0); n];
            for (b, basis_b) in basis.iter().enumerate() {
                let w = evd.U()[(b, j)];
                col.iter_mut().zip(basis_b).for_each(|(o, v)| *o += w * v);
            }
            momenta.push(if pj < 0.0 { -e } else { e });
            cols.push(col);
        }
    }
    Ok(assemble(Route::Eigenbasis, momenta, cols, h, n))
}

fn momentum_expectation(ctx: &OperatorContext, psi: &[C64]) -> f64 {
    let d = ctx.fourier().derivative(psi);
    psi.iter()
        .zip(&d)
        .map(|(x, dx)| (x.conj() * dx * C64::new(0.0, -1.0)).re)
        .sum::<f64>()
        * ctx.spacing()
}

fn ls_route(ctx: &OperatorContext, groups: &[Vec<usize>]) -> Result<DistortedTransform> {
    if !support_is_interior(ctx) {
        return Err(LabError::RouteUnavailable(
            "potential is not supported well inside the box".into(),
        ));
    }
    let n = ctx.len();
    let h = ctx.spacing();
    let mut xis = Vec::new();
    for c in groups {
        let e = cluster_energy(ctx, c);
        if e <= 0.0 {
            continue;
        }
        if c.len() != 2 {
            return Err(LabError::RouteUnavailable(format!(
                "box level {e:.6} has multiplicity {}; plane waves need matched +-xi pairs",
                c.len()
            )));
        }
        xis.push(e.sqrt());
        xis.push(-e.sqrt());
    }
    if xis.is_empty() {
        return Err(LabError::RouteUnavailable("no positive box momenta in range".into()));
    }
    let table = plane_wave_table(ctx, &xis)?;
    let mut cols = Vec::with_capacity(xis.len());
    for pair in table.columns.chunks(2) {
        let g = |a: &[C64], b: &[C64]| -> C64 {
            a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * h
        };
        let gram = Mat::from_fn(2, 2, |i, j| g(&pair[i], &pair[j]));
        let evd = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| LabError::Eigensolver(format!("{e:?}")))?;
        let mut inv_sqrt = Mat::<C64>::zeros(2, 2);
        for k in 0..2 {
            let s = evd.S()[k].re;
            if !(s > 1e-12 * g(&pair[0], &pair[0]).re) {
                return Err(LabError::RouteUnavailable("plane-wave pair is degenerate".into()));
            }
            for i in 0..2 {
                for j in 0..2 {
                    inv_sqrt[(i, j)] += evd.U()[(i, k)] * evd.U()[(j, k)].conj() / s.sqrt();
                }
            }
        }
        for j in 0..2 {
            let col: Vec<C64> = (0..n)
                .map(|x| pair[0][x] * inv_sqrt[(0, j)] + pair[1][x] * inv_sqrt[(1, j)])
                .collect();
            cols.push(col);
        }
    }
    Ok(assemble(Route::LippmannSchwinger, xis, cols, h, n))
}

fn assemble(route: Route, momenta: Vec<f64>, cols: Vec<Vec<C64>>, h: f64, n: usize) -> DistortedTransform {
    let synthesis = Mat::from_fn(n, cols.len(), |i, j| cols[j][i]);
    DistortedTransform {
        route,
        momenta,
        synthesis,
        spacing: h,
    }
}

/// `M_m(H) u = F^dagger m(xi) F u`.
pub fn distorted_multiplier(
    transform: &DistortedTransform,
    m: impl Fn(f64) -> C64,
    field: &SpectralField,
) -> Result<SpectralField> {
    let mut c = transform.forward(field.values())?;
    for (cj, &xi) in c.iter_mut().zip(transform.momenta()) {
        let v = m(xi);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(LabError::UndefinedFunction { eigenvalue: xi * xi });
        }
        *cj *= v;
    }
    Ok(SpectralField::new(transform.adjoint(&c)?))
}

/// `sup_f ||M_{1_E} f||_inf / ||f||_2` for `E = [a, b]` in momentum, which is
/// `max_x (sum_{xi_j in E} |psi_j(x)|^2)^{1/2}`.
pub fn indicator_sup_bound(transform: &DistortedTransform, a: f64, b: f64) -> f64 {
    let rows = transform.synthesis.nrows();
    let sel: Vec<usize> = (0..transform.len())
        .filter(|&j| (a..=b).contains(&transform.momenta[j]))
        .collect();
    (0..rows)
        .map(|i| sel.iter().map(|&j| transform.synthesis[(i, j)].norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max)
        .sqrt()
}
