use nls_lab::critical_norms::*;
use nls_lab::evolution::{local_smoothing_ratio, Forcing};
use nls_lab::rng::{complex_gaussian, stream_rng};
use nls_lab::spectral::{lp_block, sobolev_norm, Block, Flavor, Grid1D, OperatorContext, PotentialSpec, SpectralField};
use nls_lab::{LabError, C64};
use rand::Rng;

fn well(l: f64, n: usize) -> OperatorContext {
    let g = Grid1D::new(l, n).unwrap();
    let v = PotentialSpec::sech_squared(&g, 2.0, 1.0).unwrap();
    OperatorContext::build(g, v, 1).unwrap()
}

fn bump(ctx: &OperatorContext, width: f64, k: f64) -> SpectralField {
    SpectralField::new(
        ctx.grid()
            .nodes()
            .iter()
            .map(|x| C64::from_polar((-x * x / (2.0 * width * width)).exp(), k * x))
            .collect(),
    )
}

fn linear_path(ctx: &OperatorContext, u0: &SpectralField, times: &[f64]) -> DiscretePath {
    let v: Vec<Vec<C64>> = times.iter().map(|&t| ctx.propagate(u0, t).unwrap().into_values()).collect();
    DiscretePath::new(times.to_vec(), v, ctx.spacing()).unwrap()
}

/// Every chain of samples, summed left to right from the (optional) zero start.
fn brute_force(vs: &[Vec<C64>], w: f64, q: f64, prefix: bool) -> f64 {
    let n = vs.len();
    let dist = |a: &[C64], b: &[C64]| (w * a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>()).sqrt();
    let norm = |a: &[C64]| (w * a.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt();
    let mut best = 0.0f64;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut s = if prefix { norm(&vs[idx[0]]).powf(q) } else { 0.0 };
        for p in idx.windows(2) {
            s += dist(&vs[p[1]], &vs[p[0]]).powf(q);
        }
        best = best.max(s);
    }
    best.powf(1.0 / q)
}

#[test]
fn small_examples() {
    let p = DiscretePath::scalar(&[0.0, 1.0, 0.0]).unwrap();
    assert!((q_variation(&p, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!((q_variation(&p.clone().with_zero_prefix(false), 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    let mono = DiscretePath::scalar(&[0.0, 0.1, 0.35, 0.6, 0.61, 1.0]).unwrap().with_zero_prefix(false);
    for q in [1.0, 1.5, 2.0, 4.0] {
        assert!((q_variation(&mono, q).unwrap() - 1.0).abs() < 1e-15);
    }
    let flat = DiscretePath::scalar(&[2.0, 2.0, 2.0]).unwrap().with_zero_prefix(false);
    assert_eq!(q_variation(&flat, 2.0).unwrap(), 0.0);
    assert!(matches!(q_variation(&p, 0.5), Err(LabError::InvalidArgument(_))));
}

#[test]
fn dp_matches_enumeration_and_embeddings() {
    let mut rng = stream_rng(10, 0);
    for case in 0..500 {
        let n = rng.gen_range(1..=10);
        let dim = rng.gen_range(1..=3);
        let prefix = case % 3 != 0 || n == 1;
        let vs: Vec<Vec<C64>> = (0..n).map(|_| (0..dim).map(|_| complex_gaussian(&mut rng, 1.0)).collect()).collect();
        let w = if case % 2 == 0 { 1.0 } else { 0.37 };
        let path = DiscretePath::new((0..n).map(|i| i as f64).collect(), vs.clone(), w)
            .unwrap()
            .with_zero_prefix(prefix);
        let mut last = f64::INFINITY;
        for q in [1.0, 1.5, 2.0, 3.0, 4.0] {
            let dp = q_variation(&path, q).unwrap();
            assert_eq!(dp, brute_force(&vs, w, q, prefix), "case {case} q {q}");
            assert!(dp <= last * (1.0 + 1e-12));
            last = dp;
            if prefix {
                let sup = vs.iter().map(|v| (w * v.iter().map(|x| x.norm_sqr()).sum::<f64>()).sqrt()).fold(0.0, f64::max);
                assert!(sup <= dp * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn adapted_norm_of_linear_flow() {
    let ctx = well(20.0, 256);
    let u0 = ctx.projector_continuous(&bump(&ctx, 1.0, 0.5)).unwrap();
    let times: Vec<f64> = (0..11).map(|i| 0.2 * i as f64).collect();
    let path = linear_path(&ctx, &u0, &times);
    for s in [0.0, 0.5, 1.0] {
        let expected = {
            let w = ctx.apply_function(&u0, |l| (1.0 + l.max(0.0)).powf(0.5 * s)).unwrap();
            ctx.norm(w.values())
        };
        let got = adapted_norm(&ctx, &path, 2.0, PathGenerator::Perturbed, s).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
        let none = adapted_norm(&ctx, &path.clone().with_zero_prefix(false), 2.0, PathGenerator::Perturbed, s).unwrap();
        assert!(none < 1e-12 * expected);
    }
    let fine: Vec<f64> = (0..41).map(|i| 0.05 * i as f64).collect();
    let a = adapted_norm(&ctx, &path, 2.0, PathGenerator::Perturbed, 0.5).unwrap();
    let b = adapted_norm(&ctx, &linear_path(&ctx, &u0, &fine), 2.0, PathGenerator::Perturbed, 0.5).unwrap();
    assert!((a - b).abs() < 1e-12 * a);

    let g = *ctx.grid();
    let free = OperatorContext::build(g, PotentialSpec::zero(&g), 1).unwrap();
    let fv: Vec<Vec<C64>> = times.iter().map(|&t| free.propagate_free(u0.values(), t)).collect();
    let fp = DiscretePath::new(times.clone(), fv, ctx.spacing()).unwrap();
    let got = adapted_norm(&ctx, &fp, 2.0, PathGenerator::Free, 0.0).unwrap();
    assert!((got - ctx.norm(u0.values())).abs() < 1e-12);
}

#[test]
fn forced_path_is_stable_under_refinement() {
    let ctx = well(20.0, 256);
    let u0 = ctx.projector_continuous(&bump(&ctx, 1.0, 0.5)).unwrap();
    let forcing = bump(&ctx, 2.0, 0.0);
    let lam = ctx.eigenvalues().to_vec();
    let c0 = ctx.to_eigen(u0.values());
    let cf = ctx.to_eigen(forcing.values());
    // i psi_t = H psi + cos(t) F, solved exactly per eigenmode
    let solution = |t: f64| -> Vec<C64> {
        let c: Vec<C64> = (0..lam.len())
            .map(|k| {
                let l = lam[k];
                let i = C64::new(0.0, 1.0);
                let integral = if l.abs() < 1e-12 {
                    C64::new(t.sin(), 0.0)
                } else {
                    // int_0^t e^{i l s} cos s ds
                    let a = |w: f64| (C64::from_polar(1.0, w * t) - 1.0) / (i * w);
                    if (l - 1.0).abs() < 1e-9 || (l + 1.0).abs() < 1e-9 {
                        0.5 * (C64::new(t, 0.0) + a(2.0 * l))
                    } else {
                        0.5 * (a(l + 1.0) + a(l - 1.0))
                    }
                };
                C64::from_polar(1.0, -l * t) * (c0[k] - i * cf[k] * integral)
            })
            .collect();
        ctx.from_eigen(&c)
    };
    let mut norms = Vec::new();
    for steps in [20usize, 40, 80] {
        let times: Vec<f64> = (0..=steps).map(|i| 2.0 * i as f64 / steps as f64).collect();
        let v: Vec<Vec<C64>> = times.iter().map(|&t| solution(t)).collect();
        let p = DiscretePath::new(times, v, ctx.spacing()).unwrap();
        norms.push(adapted_norm(&ctx, &p, 2.0, PathGenerator::Perturbed, 0.0).unwrap());
    }
    eprintln!("forced adapted norms {norms:?}, data norm {:.5}", ctx.norm(u0.values()));
    let u0n = ctx.norm(u0.values());
    assert!(norms.iter().all(|n| n.is_finite() && *n >= u0n * (1.0 - 1e-9)));
    // finer partitions can only add chains
    assert!(norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
    assert!(norms[2] - norms[0] < 1e-3 * norms[2]);
}

#[test]
fn x_norm_cases() {
    let ctx = well(20.0, 256);
    let u0 = ctx.projector_continuous(&bump(&ctx, 0.7, 2.0)).unwrap();
    let times: Vec<f64> = (0..9).map(|i| 0.25 * i as f64).collect();
    let path = linear_path(&ctx, &u0, &times);
    let n = 2.0;
    let s = -0.5;
    let rep = x_norm(&ctx, &path, &[Block::Dyadic(n)], s).unwrap();
    let block = lp_block(&ctx, n, &u0, Flavor::Distorted).unwrap();
    let expected = n.powf(s) * ctx.norm(block.values());
    assert!((rep.value - expected).abs() < 1e-12 * expected);

    let zero = DiscretePath::new(times.clone(), vec![vec![C64::new(0.0, 0.0); ctx.len()]; times.len()], ctx.spacing()).unwrap();
    assert_eq!(x_norm(&ctx, &zero, &nls_lab::spectral::covering_blocks(&ctx), s).unwrap().value, 0.0);

    // a nonlinear-looking path: flow plus a slowly switched-on second datum
    let extra = ctx.projector_continuous(&bump(&ctx, 1.5, -1.0)).unwrap();
    let v: Vec<Vec<C64>> = times
        .iter()
        .map(|&t| {
            let a = ctx.propagate(&u0, t).unwrap();
            let b = ctx.propagate(&extra, t).unwrap();
            a.values().iter().zip(b.values()).map(|(x, y)| x + y * (t / 2.0).min(1.0)).collect()
        })
        .collect();
    let p = DiscretePath::new(times, v, ctx.spacing()).unwrap();
    let x = x_norm(&ctx, &p, &nls_lab::spectral::covering_blocks(&ctx), 0.0).unwrap().value;
    let a = adapted_norm(&ctx, &p, 2.0, PathGenerator::Perturbed, 0.0).unwrap();
    eprintln!("x_norm / adapted = {:.4}", x / a);
    assert!(x >= 0.5 * a);
}

#[test]
fn pairing_identities() {
    let w = 1.0;
    let jumps = [C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.7, -1.1)];
    let mut vals = vec![vec![C64::new(0.0, 0.0)]];
    for j in jumps {
        let last = vals.last().unwrap()[0];
        vals.push(vec![last + j]);
    }
    let times: Vec<f64> = (0..4).map(|i| i as f64).collect();
    let u = StepPath::new(DiscretePath::new(times.clone(), vals.clone(), w).unwrap()).unwrap();
    let c = C64::new(0.4, -0.9);
    let v = DiscretePath::new(times.clone(), vec![vec![c]; 4], w).unwrap();
    let b = duality_pairing(&u, &v).unwrap();
    let expected = vals[3][0] * c.conj();
    assert!((b - expected).norm() < 1e-14);

    let single = StepPath::new(
        DiscretePath::new(times.clone(), vec![vec![C64::new(0.0, 0.0)], vec![C64::new(2.0, 1.0)], vec![C64::new(2.0, 1.0)], vec![C64::new(2.0, 1.0)]], w).unwrap(),
    )
    .unwrap();
    let v2 = DiscretePath::new(times.clone(), (0..4).map(|i| vec![C64::new(i as f64, 1.0)]).collect(), w).unwrap();
    let b = duality_pairing(&single, &v2).unwrap();
    assert!((b - C64::new(2.0, 1.0) * C64::new(1.0, -1.0)).norm() < 1e-14);

    let bad = DiscretePath::new(times, vec![vec![C64::new(1.0, 0.0)]; 4], w).unwrap();
    assert!(matches!(StepPath::new(bad), Err(LabError::NotStepPath(_))));
}

/// `sup_{||v||_{V^2} = 1} Re B(u, v) = min_mu sqrt(tr(A_mu^{-1} G))` over convex
/// weights `mu` on the chains of `{1..K}`, `A_S` the quadratic form of chain `S`
/// started from zero and `G` the real Gram matrix of the jumps.
fn exact_dual_sup(jumps: &[C64]) -> f64 {
    let k = jumps.len();
    let chains: Vec<Vec<usize>> = (1u32..(1 << k)).map(|m| (0..k).filter(|i| m & (1 << i) != 0).collect()).collect();
    let forms: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| {
            let mut a = vec![vec![0.0; k]; k];
            a[c[0]][c[0]] += 1.0;
            for p in c.windows(2) {
                let (i, j) = (p[0], p[1]);
                a[i][i] += 1.0;
                a[j][j] += 1.0;
                a[i][j] -= 1.0;
                a[j][i] -= 1.0;
            }
            a
        })
        .collect();
    let g: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| (jumps[i] * jumps[j].conj()).re).collect()).collect();
    let f = |mu: &[f64]| -> (f64, Vec<f64>) {
        let mut a = vec![vec![0.0; k]; k];
        for (w, form) in mu.iter().zip(&forms) {
            for i in 0..k {
                for j in 0..k {
                    a[i][j] += w * form[i][j];
                }
            }
        }
        let ai = gauss_jordan_inverse(&a);
        let val: f64 = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| ai[i][j] * g[j][i]).sum();
        // d/dmu_S tr(A^{-1} G) = -tr(A^{-1} A_S A^{-1} G)
        let aga: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| (0..k).flat_map(|p| (0..k).map(move |r| (p, r))).map(|(p, r)| ai[i][p] * g[p][r] * ai[r][j]).sum()).collect())
            .collect();
        let grad = forms
            .iter()
            .map(|form| -(0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| form[i][j] * aga[j][i]).sum::<f64>())
            .collect();
        (val, grad)
    };
    let mut mu = vec![1.0 / chains.len() as f64; chains.len()];
    let mut best = f64::INFINITY;
    for it in 0..200_000 {
        let (val, grad) = f(&mu);
        best = best.min(val);
        let scale = grad.iter().map(|g| g.abs()).fold(0.0, f64::max).max(1e-300);
        let step = 0.5 / (1.0 + it as f64).sqrt() / scale;
        let mut z = 0.0;
        for (m, g) in mu.iter_mut().zip(&grad) {
            *m *= (-step * g).exp();
            z += *m;
        }
        mu.iter_mut().for_each(|m| *m /= z);
    }
    best.sqrt()
}

fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut inv: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..k {
        let p = (c..k).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, p);
        inv.swap(c, p);
        let d = m[c][c];
        for j in 0..k {
            m[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..k {
            if r != c {
                let f = m[r][c];
                for j in 0..k {
                    m[r][j] -= f * m[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

#[test]
fn random_search_reaches_the_dual_supremum() {
    let mut rng = stream_rng(77, 0);
    for case in 0..3 {
        let jumps: Vec<C64> = (0..3).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let mut vals = vec![vec![C64::new(0.0, 0.0)]];
        for j in &jumps {
            let last = vals.last().unwrap()[0];
            vals.push(vec![last + j]);
        }
        let u = StepPath::new(DiscretePath::new((0..4).map(|i| i as f64).collect(), vals, 1.0).unwrap()).unwrap();
        let exact = exact_dual_sup(&jumps);
        let lower = du2_lower_bound(&u, 100_000, case).unwrap();
        eprintln!("case {case}: random search {lower:.5} exact {exact:.5}");
        assert!(lower <= exact * (1.0 + 1e-6));
        assert!(lower >= 0.95 * exact);
    }
}

#[test]
fn weighted_spacetime_norm_cases() {
    let ctx = well(20.0, 256);
    assert_eq!(weighted_spacetime_norm(&ctx, &[], 0.05, DEFAULT_SIGMA).unwrap(), 0.0);
    let zero = vec![vec![C64::new(0.0, 0.0); ctx.len()]; 5];
    assert_eq!(weighted_spacetime_norm(&ctx, &zero, 0.05, DEFAULT_SIGMA).unwrap(), 0.0);

    let phi0 = ctx.ground_state().unwrap();
    let bound: Vec<Vec<C64>> = (0..20)
        .map(|i| phi0.iter().map(|v| C64::from_polar(*v, -ctx.eigenvalues()[0] * 0.05 * i as f64)).collect())
        .collect();
    assert!(weighted_spacetime_norm(&ctx, &bound, 0.05, DEFAULT_SIGMA).unwrap() < 1e-10);

    let u0 = bump(&ctx, 1.0, 1.0);
    let horizon = 2.0;
    let steps = (horizon / 0.05f64).ceil() as usize;
    let dt = horizon / steps as f64;
    let fields: Vec<Vec<C64>> = (0..=steps).map(|i| ctx.propagate(&u0, i as f64 * dt).unwrap().into_values()).collect();
    let w = weighted_spacetime_norm(&ctx, &fields, dt, DEFAULT_SIGMA).unwrap();
    let ratio = local_smoothing_ratio(&ctx, &u0, &Forcing::Zero, horizon, DEFAULT_SIGMA).unwrap();
    let d = sobolev_norm(&ctx, &u0, 0.5, Flavor::Flat, 0.0).unwrap();
    assert!((w * w / (d * d) - ratio).abs() < 1e-10 * ratio);

    // critical-weighted coherence constant
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let pc = ctx.projector_continuous(&u0).unwrap();
    let path = linear_path(&ctx, &pc, &times);
    let v = adapted_norm(&ctx, &path, 2.0, PathGenerator::Perturbed, 0.5).unwrap();
    let c = (v + w) / d;
    eprintln!("coherence constant {c:.4}");
    assert!(c.is_finite() && c < 10.0);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

    #[test]
    fn q_variation_invariants(
        values in proptest::collection::vec(-3.0f64..3.0, 2..9),
        prefix in proptest::bool::ANY,
        q in 1.0f64..4.0,
        dq in 0.1f64..3.0,
    ) {
        let p = DiscretePath::scalar(&values).unwrap().with_zero_prefix(prefix);
        let vs: Vec<Vec<C64>> = values.iter().map(|&v| vec![C64::new(v, 0.0)]).collect();
        let v = q_variation(&p, q).unwrap();
        let exact = brute_force(&vs, 1.0, q, prefix);
        proptest::prop_assert!((v - exact).abs() <= 1e-12 * exact.max(1.0));
        proptest::prop_assert!(q_variation(&p, q + dq).unwrap() <= v * (1.0 + 1e-12));
        let mut sup = 0.0f64;
        for (i, a) in values.iter().enumerate() {
            if prefix {
                sup = sup.max(a.abs());
            }
            for b in &values[i + 1..] {
                sup = sup.max((a - b).abs());
            }
        }
        proptest::prop_assert!(sup <= v * (1.0 + 1e-12));
    }
}
