//! Grid `V^q` norms of sampled paths, their `e^{itH}`-adapted versions, the
//! `U^2`/`V^2` duality pairing for step paths, and weighted space-time norms.
//!
//! Partitions range over the sample times only, so every value here is the
//! "grid" norm: a lower bound for the continuum norm of a continuous path.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolution::weighted_local_energy;
use crate::rng::{complex_gaussian, stream_rng};
use crate::spectral::{apply_block, Block, Flavor, OperatorContext, SpectralField};

/// Samples `v(t_k)` of a path in a weighted `l^2` space (`weight` = quadrature
/// step `h` for grid fields, 1 for plain vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    times: Vec<f64>,
    vectors: Vec<Vec<C64>>,
    weight: f64,
    /// An implicit zero state precedes the first sample.
    zero_prefix: bool,
}

impl DiscretePath {
    pub fn new(times: Vec<f64>, vectors: Vec<Vec<C64>>, weight: f64) -> Result<Self> {
        if times.len() != vectors.len() {
            return Err(LabError::ShapeMismatch {
                expected: times.len(),
                got: vectors.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::InvalidArgument("path times must increase strictly".into()));
        }
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
                return Err(LabError::ShapeMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        if !(weight > 0.0) {
            return Err(LabError::InvalidArgument("path weight must be positive".into()));
        }
        Ok(Self {
            times,
            vectors,
            weight,
            zero_prefix: true,
        })
    }

    /// Scalar path with unit weight.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(
            (0..values.len()).map(|i| i as f64).collect(),
            values.iter().map(|v| vec![C64::new(*v, 0.0)]).collect(),
            1.0,
        )
    }

    pub fn with_zero_prefix(mut self, on: bool) -> Self {
        self.zero_prefix = on;
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.vectors
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn zero_prefix(&self) -> bool {
        self.zero_prefix
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn map(&self, f: impl Fn(f64, &[C64]) -> Result<Vec<C64>> + Sync) -> Result<Self> {
        let vectors = self
            .times
            .par_iter()
            .zip(&self.vectors)
            .map(|(&t, v)| f(t, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            times: self.times.clone(),
            vectors,
            weight: self.weight,
            zero_prefix: self.zero_prefix,
        })
    }

    fn distance(&self, a: &[C64], b: &[C64]) -> f64 {
        (self.weight * a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>()).sqrt()
    }

    fn norm(&self, a: &[C64]) -> f64 {
        (self.weight * a.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Effective points: the samples, preceded by zero when flagged.
    fn points(&self) -> Vec<&[C64]> {
        self.vectors.iter().map(|v| v.as_slice()).collect()
    }
}

/// `sup_partitions (sum_k ||v(t_k) - v(t_{k-1})||^q)^{1/q}` over sub-partitions
/// of the sample times, by dynamic programming over the last point.
pub fn q_variation(path: &DiscretePath, q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(LabError::InvalidArgument(format!("q-variation needs q >= 1, got {q}")));
    }
    let pts = path.points();
    let effective = pts.len() + path.zero_prefix as usize;
    if effective < 2 {
        return Err(LabError::InvalidArgument("q-variation needs at least two effective samples".into()));
    }
    let n = pts.len();
    // best[k]: largest sum over chains ending at sample k
    let mut best = vec![0.0f64; n];
    for k in 0..n {
        let mut b = if path.zero_prefix {
            path.norm(pts[k]).powf(q)
        } else {
            0.0
        };
        for j in 0..k {
            b = b.max(best[j] + path.distance(pts[k], pts[j]).powf(q));
        }
        best[k] = b;
    }
    Ok(best.iter().copied().fold(0.0, f64::max).powf(1.0 / q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathGenerator {
    /// `H = -d^2/dx^2 + V`.
    Perturbed,
    /// `H0 = -d^2/dx^2`.
    Free,
}

/// Pulls back `v(t)` to `<sqrt G>^s e^{itG} v(t)`.
fn pullback(ctx: &OperatorContext, path: &DiscretePath, generator: PathGenerator, s: f64) -> Result<DiscretePath> {
    path.map(|t, v| {
        let field = SpectralField::new(v.to_vec());
        Ok(match generator {
            PathGenerator::Perturbed => ctx
                .apply_complex_function(&field, |l| {
                    C64::from_polar((1.0 + l.max(0.0)).powf(0.5 * s), t * l)
                })?
                .into_values(),
            PathGenerator::Free => ctx
                .fourier()
                .multiplier(v, |k| C64::from_polar((1.0 + k * k).powf(0.5 * s), t * k * k)),
        })
    })
}

/// `||<sqrt G>^s e^{itG} v||_{V^q}` on the sample grid.
pub fn adapted_norm(
    ctx: &OperatorContext,
    path: &DiscretePath,
    q: f64,
    generator: PathGenerator,
    s: f64,
) -> Result<f64> {
    check_fields(ctx, path)?;
    q_variation(&pullback(ctx, path, generator, s)?, q)
}

fn check_fields(ctx: &OperatorContext, path: &DiscretePath) -> Result<()> {
    match path.vectors.first() {
        Some(v) if v.len() != ctx.len() => Err(LabError::ShapeMismatch {
            expected: ctx.len(),
            got: v.len(),
        }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XNormReport {
    pub value: f64,
    /// `(label, weight, adapted V^2 norm)` per block; the low block has label 0.
    pub blocks: Vec<(f64, f64, f64)>,
    pub s: f64,
    /// `U^2` is not computed; `V^2` block norms bound it from below.
    pub note: String,
}

/// `(sum_N N^{2s} ||Delta~_N v||^2_{V^2_H})^{1/2}` over the given blocks;
/// `s = (d - 2)/2` is the critical choice.
pub fn x_norm(ctx: &OperatorContext, path: &DiscretePath, blocks: &[Block], s: f64) -> Result<XNormReport> {
    check_fields(ctx, path)?;
    let rows = blocks
        .par_iter()
        .map(|b| {
            let piece = path.map(|_, v| {
                Ok(apply_block(ctx, *b, &SpectralField::new(v.to_vec()), Flavor::Distorted)?.into_values())
            })?;
            let label = match b {
                Block::Low => 0.0,
                Block::Dyadic(n) => *n,
            };
            let weight = if label > 0.0 { label.powf(2.0 * s) } else { 1.0 };
            let norm = if piece.vectors.iter().all(|v| v.iter().all(|x| x.norm() == 0.0)) {
                0.0
            } else {
                adapted_norm(ctx, &piece, 2.0, PathGenerator::Perturbed, 0.0)?
            };
            Ok((label, weight, norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let value = rows.iter().map(|(_, w, n)| w * n * n).sum::<f64>().sqrt();
    Ok(XNormReport {
        value,
        blocks: rows,
        s,
        note: "block norms are V^2; U^2 embeds into V^2".into(),
    })
}

/// Right-continuous step path with `u(t_0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPath(DiscretePath);

impl StepPath {
    pub fn new(path: DiscretePath) -> Result<Self> {
        match path.vectors.first() {
            Some(v0) if v0.iter().all(|x| *x == C64::new(0.0, 0.0)) => Ok(Self(path)),
            Some(_) => Err(LabError::NotStepPath("u(t_0) is not zero".into())),
            None => Err(LabError::NotStepPath("no samples".into())),
        }
    }

    pub fn path(&self) -> &DiscretePath {
        &self.0
    }

    /// Jumps `u(t_i) - u(t_{i-1})`, `i >= 1`.
    pub fn jumps(&self) -> Vec<Vec<C64>> {
        self.0
            .vectors
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect()
    }
}

/// `B(u, v) = sum_i <u(t_i) - u(t_{i-1}), v(t_i)>`, linear in `u`.
pub fn duality_pairing(u: &StepPath, v: &DiscretePath) -> Result<C64> {
    let up = u.path();
    if up.times != v.times {
        return Err(LabError::InvalidArgument("pairing needs paths on the same times".into()));
    }
    let w = up.weight;
    Ok(u.jumps()
        .iter()
        .zip(&v.vectors[1..])
        .map(|(j, vi)| j.iter().zip(vi).map(|(a, b)| a * b.conj()).sum::<C64>() * w)
        .sum())
}

/// Lower bound `max |B(u, v)| / ||v||_{V^2}` over random gaussian test paths
/// (zero-prefixed `V^2` norm of `v(t_1), ..., v(t_K)`).
pub fn du2_lower_bound(u: &StepPath, samples: usize, seed: u64) -> Result<f64> {
    let up = u.path();
    let dim = up.vectors.first().map_or(0, |v| v.len());
    let k = up.len();
    if k < 2 {
        return Err(LabError::NotStepPath("needs at least one jump".into()));
    }
    let best = (0..samples as u64)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let mut rng = stream_rng(seed, s);
            let mut vecs: Vec<Vec<C64>> = (0..k)
                .map(|_| (0..dim).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
                .collect();
            // repeated values give test paths with fewer effective jumps
            for i in 1..k {
                if rng.gen::<f64>() < 0.25 {
                    vecs[i] = vecs[i - 1].clone();
                }
            }
            let v = DiscretePath {
                times: up.times.clone(),
                vectors: vecs,
                weight: up.weight,
                zero_prefix: true,
            };
            let tail = DiscretePath {
                times: up.times[1..].to_vec(),
                vectors: v.vectors[1..].to_vec(),
                weight: up.weight,
                zero_prefix: true,
            };
            let norm = q_variation(&tail, 2.0)?;
            if norm == 0.0 {
                return Ok(0.0);
            }
            Ok(duality_pairing(u, &v)?.norm() / norm)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(best)
}

/// `(int ||P_c psi(t)||^2_{H^{1,sigma}} dt)^{1/2}` by the trapezoid rule over
/// uniform samples at spacing `dt`.
pub fn weighted_spacetime_norm(ctx: &OperatorContext, fields: &[Vec<C64>], dt: f64, sigma: f64) -> Result<f64> {
    if fields.is_empty() {
        return Ok(0.0);
    }
    if !(dt > 0.0) {
        return Err(LabError::InvalidArgument("sample spacing must be positive".into()));
    }
    Ok(weighted_local_energy(ctx, fields, dt, sigma)?.sqrt())
}

/// Default weight exponent `-1/2 - 0.1`.
pub const DEFAULT_SIGMA: f64 = -0.6;
