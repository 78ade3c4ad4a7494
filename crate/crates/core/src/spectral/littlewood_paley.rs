use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::cutoff::{block_symbol, dyadic_exponent, frequency_of, low_symbol};
use super::field::{l2_norm, sup_norm, SpectralField};
use super::grid::japanese;
use super::operator::OperatorContext;
use crate::error::{LabError, Result};
use crate::linalg;

/// Which operator generates the frequency localization: `H0 = -d^2/dx^2` or `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Flat,
    Distorted,
}

/// One piece of the Littlewood-Paley decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Block {
    Low,
    Dyadic(f64),
}

impl Block {
    pub fn symbol(&self, frequency: f64) -> f64 {
        match *self {
            Block::Low => low_symbol(frequency),
            Block::Dyadic(n) => block_symbol(frequency, n),
        }
    }
}

/// Low block followed by every dyadic block needed to cover the spectrum of
/// both `H` and `H0` on this grid.
pub fn covering_blocks(ctx: &OperatorContext) -> Vec<Block> {
    let top_h = frequency_of(*ctx.eigenvalues().last().unwrap_or(&0.0));
    let top = top_h.max(ctx.grid().k_max());
    let mut blocks = vec![Block::Low];
    let mut n = 1.0;
    loop {
        blocks.push(Block::Dyadic(n));
        if n >= top {
            break;
        }
        n *= 2.0;
    }
    blocks
}

pub fn apply_block(
    ctx: &OperatorContext,
    block: Block,
    field: &SpectralField,
    flavor: Flavor,
) -> Result<SpectralField> {
    if let Block::Dyadic(n) = block {
        dyadic_exponent(n)?;
    }
    match flavor {
        Flavor::Flat => {
            if field.len() != ctx.len() {
                return Err(LabError::ShapeMismatch {
                    expected: ctx.len(),
                    got: field.len(),
                });
            }
            Ok(SpectralField::new(ctx.fourier().multiplier(field.values(), |k| {
                C64::new(block.symbol(k.abs()), 0.0)
            })))
        }
        Flavor::Distorted => {
            ctx.apply_function(field, |l| block.symbol(frequency_of(l)))
        }
    }
}

/// Dyadic block at frequency `n`: the multiplier `phi(sqrt(max(lambda, 0)) / n)`.
pub fn lp_block(
    ctx: &OperatorContext,
    n: f64,
    field: &SpectralField,
    flavor: Flavor,
) -> Result<SpectralField> {
    apply_block(ctx, Block::Dyadic(n), field, flavor)
}

pub fn lp_low_block(
    ctx: &OperatorContext,
    field: &SpectralField,
    flavor: Flavor,
) -> Result<SpectralField> {
    apply_block(ctx, Block::Low, field, flavor)
}

/// `||block u||_inf / (n^{d/2} ||block u||_2)`; zero for an empty block.
pub fn bernstein_ratio(ctx: &OperatorContext, n: f64, field: &SpectralField, flavor: Flavor) -> Result<f64> {
    let b = lp_block(ctx, n, field, flavor)?;
    let l2 = l2_norm(b.values(), ctx.spacing());
    if l2 == 0.0 {
        return Ok(0.0);
    }
    Ok(sup_norm(b.values()) / (n.powf(ctx.dimension() as f64 / 2.0) * l2))
}

/// Pointwise square function `(sum_blocks |block u|^2)^{1/2}`.
pub fn square_function(ctx: &OperatorContext, field: &SpectralField, flavor: Flavor) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; field.len()];
    for block in covering_blocks(ctx) {
        let b = apply_block(ctx, block, field, flavor)?;
        for (a, v) in acc.iter_mut().zip(b.values()) {
            *a += v.norm_sqr();
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// Operator norm of `flat_K o distorted_N`, the largest singular value of
/// `diag(phi_K(k)) F U diag(phi_N(sqrt lambda))` restricted to the supports.
pub fn cross_localization_norm(ctx: &OperatorContext, k_block: f64, n_block: f64) -> Result<f64> {
    dyadic_exponent(k_block)?;
    dyadic_exponent(n_block)?;
    let ks = ctx.fourier().wavenumbers();
    if ctx.potential().is_zero() {
        return Ok(ks
            .iter()
            .map(|k| (block_symbol(k.abs(), k_block) * block_symbol(k.abs(), n_block)).abs())
            .fold(0.0, f64::max));
    }
    let rows: Vec<usize> = (0..ks.len())
        .filter(|&m| block_symbol(ks[m].abs(), k_block) != 0.0)
        .collect();
    let cols: Vec<usize> = (0..ctx.len())
        .filter(|&j| block_symbol(frequency_of(ctx.eigenvalues()[j]), n_block) != 0.0)
        .collect();
    if rows.is_empty() || cols.is_empty() {
        return Ok(0.0);
    }
    let n = ctx.len();
    let norm = 1.0 / (n as f64).sqrt();
    let u = ctx.eigenvectors();
    let mut b = Mat::<C64>::zeros(rows.len(), cols.len());
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (c, &j) in cols.iter().enumerate() {
        for (i, x) in buf.iter_mut().enumerate() {
            *x = C64::new(u[(i, j)], 0.0);
        }
        ctx.fourier().forward_in_place(&mut buf);
        let f = block_symbol(frequency_of(ctx.eigenvalues()[j]), n_block);
        for (r, &m) in rows.iter().enumerate() {
            let g = block_symbol(ks[m].abs(), k_block);
            b[(r, c)] = buf[m] * (norm * f * g);
        }
    }
    linalg::largest_singular_value(&b)
}

/// `|| <D>^s (<x>^sigma u) ||_2`, with `<D>` either `<k>` or `<sqrt(max(H, 0))>`.
pub fn sobolev_norm(
    ctx: &OperatorContext,
    field: &SpectralField,
    s: f64,
    flavor: Flavor,
    sigma: f64,
) -> Result<f64> {
    if flavor == Flavor::Distorted && s < 0.0 && !ctx.negative_indices().is_empty() {
        return Err(LabError::NegativeSobolevIndex { s });
    }
    if field.len() != ctx.len() {
        return Err(LabError::ShapeMismatch {
            expected: ctx.len(),
            got: field.len(),
        });
    }
    let weighted: SpectralField = if sigma == 0.0 {
        field.clone()
    } else {
        SpectralField::new(
            field
                .values()
                .iter()
                .zip(ctx.grid().nodes())
                .map(|(v, x)| v * japanese(x).powf(sigma))
                .collect(),
        )
    };
    let h = ctx.spacing();
    if s == 0.0 {
        return Ok(l2_norm(weighted.values(), h));
    }
    match flavor {
        Flavor::Flat => {
            let mut c = ctx.fourier().forward(weighted.values());
            let n = c.len() as f64;
            let mut acc = 0.0;
            for (v, k) in c.iter_mut().zip(ctx.fourier().wavenumbers()) {
                acc += v.norm_sqr() * (1.0 + k * k).powf(s);
            }
            Ok((acc * h / n).sqrt())
        }
        Flavor::Distorted => {
            let c = ctx.coefficients(&weighted)?;
            let acc: f64 = c
                .iter()
                .zip(ctx.eigenvalues())
                .map(|(v, l)| v.norm_sqr() * (1.0 + l.max(0.0)).powf(s))
                .sum();
            Ok((acc * h).sqrt())
        }
    }
}
