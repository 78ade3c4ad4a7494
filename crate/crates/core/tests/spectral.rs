use nls_lab::rng::{complex_gaussian, stream_rng};
use nls_lab::spectral::cutoff::{block_symbol, frequency_of};
use nls_lab::spectral::field::{l2_norm, sub};
use nls_lab::spectral::*;
use nls_lab::{LabError, C64};
use proptest::prelude::*;

fn well(l: f64, n: usize, depth: f64) -> OperatorContext {
    let g = Grid1D::new(l, n).unwrap();
    OperatorContext::build(g, PotentialSpec::sech_squared(&g, depth, 1.0).unwrap(), 1).unwrap()
}

fn free(l: f64, n: usize) -> OperatorContext {
    let g = Grid1D::new(l, n).unwrap();
    OperatorContext::build(g, PotentialSpec::zero(&g), 1).unwrap()
}

fn random_field(ctx: &OperatorContext, seed: u64, width: f64) -> SpectralField {
    let mut rng = stream_rng(seed, 3);
    SpectralField::new(
        ctx.grid()
            .nodes()
            .iter()
            .map(|x| complex_gaussian(&mut rng, 1.0) * (-x * x / (2.0 * width * width)).exp())
            .collect(),
    )
}

/// Same field, low-passed so it is resolved on the grid.
fn smooth_field(ctx: &OperatorContext, seed: u64, width: f64) -> SpectralField {
    let raw = random_field(ctx, seed, width);
    SpectralField::new(ctx.fourier().multiplier(raw.values(), |k| C64::new((-k * k / 50.0).exp(), 0.0)))
}

fn dist(a: &[C64], b: &[C64], h: f64) -> f64 {
    l2_norm(&sub(a, b), h)
}

#[test]
fn free_spectrum_is_the_fourier_symbol() {
    let ctx = free(std::f64::consts::PI, 8);
    let expected = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0, 16.0];
    for (l, e) in ctx.eigenvalues().iter().zip(expected) {
        assert!((l - e).abs() < 1e-12, "{l} vs {e}");
    }
    assert_eq!(ctx.hermitian_defect(), 0.0);
    assert!(ctx.negative_indices().is_empty());
}

#[test]
fn ground_state_is_stable_under_refinement() {
    let coarse = well(40.0, 2048, 2.0);
    let fine = well(40.0, 4096, 2.0);
    assert_eq!(coarse.negative_indices().len(), 1);
    assert_eq!(fine.negative_indices().len(), 1);
    assert_eq!(coarse.hermitian_defect(), 0.0);
    assert!(coarse.orthonormality_residual() < 1e-10);
    let (a, b) = (coarse.ground_energy().unwrap(), fine.ground_energy().unwrap());
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    // depth 2 width 1: l = 1, e0 = -1
    assert!((a + 1.0).abs() < 1e-8);
    let pa = coarse.ground_state().unwrap();
    let pb = fine.ground_state().unwrap();
    let sign = if pa[1024] * pb[2048] < 0.0 { -1.0 } else { 1.0 };
    let worst = pa.iter().enumerate().map(|(j, v)| (v - sign * pb[2 * j]).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn build_rejects_bad_input() {
    assert!(matches!(Grid1D::new(10.0, 1000), Err(LabError::InvalidGrid(_))));
    assert!(matches!(Grid1D::new(10.0, 4), Err(LabError::InvalidGrid(_))));
    let g = Grid1D::new(10.0, 64).unwrap();
    let mut samples = vec![0.0; 64];
    samples[3] = f64::NAN;
    assert!(PotentialSpec::sample(PotentialKind::Tabulated { samples }, &g)
        .and_then(|v| OperatorContext::build(g, v, 1))
        .is_err());
}

#[test]
fn projectors_split_the_space() {
    let ctx = well(20.0, 256, 2.0);
    let h = ctx.spacing();
    let phi = SpectralField::from_real(&ctx.ground_state().unwrap());
    assert!(l2_norm(ctx.projector_continuous(&phi).unwrap().values(), h) < 1e-12);
    for seed in 0..5 {
        let u = random_field(&ctx, seed, 3.0);
        let pc = ctx.projector_continuous(&u).unwrap();
        let pp = ctx.projector_point(&u).unwrap();
        let n2 = l2_norm(u.values(), h).powi(2);
        let split = l2_norm(pc.values(), h).powi(2) + l2_norm(pp.values(), h).powi(2);
        assert!((split - n2).abs() < 1e-12 * n2);
        let sum: Vec<C64> = pc.values().iter().zip(pp.values()).map(|(a, b)| a + b).collect();
        assert!(dist(&sum, u.values(), h) < 1e-12 * n2.sqrt());
        let twice = ctx.projector_continuous(&pc).unwrap();
        assert!(dist(twice.values(), pc.values(), h) < 1e-12 * n2.sqrt());
        let ind = ctx.apply_function(&u, |l| if l >= 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert!(dist(ind.values(), pc.values(), h) < 1e-12 * n2.sqrt());
        // P_c commutes with the calculus
        let f = |l: f64| (-0.1 * l).exp() * (1.0 + l.abs()).sqrt();
        let a = ctx.projector_continuous(&ctx.apply_function(&u, f).unwrap()).unwrap();
        let b = ctx.apply_function(&pc, f).unwrap();
        assert!(dist(a.values(), b.values(), h) < 1e-12 * n2.sqrt());
    }
    let flat = free(20.0, 256);
    let u = random_field(&flat, 9, 3.0);
    assert_eq!(flat.projector_continuous(&u).unwrap().values(), u.values());
    let wrong = SpectralField::zeros(128);
    assert!(matches!(ctx.projector_continuous(&wrong), Err(LabError::ShapeMismatch { .. })));
}

#[test]
fn functional_calculus_matches_the_matrix() {
    let ctx = well(20.0, 256, 1.0);
    let h = ctx.spacing();
    for seed in 0..5 {
        let u = random_field(&ctx, seed, 3.0);
        let id = ctx.apply_function(&u, |_| 1.0).unwrap();
        assert!(dist(id.values(), u.values(), h) < 1e-12 * l2_norm(u.values(), h));
        let hu = ctx.apply_function(&u, |l| l).unwrap();
        let direct = ctx.apply_matrix(u.values());
        assert!(dist(hu.values(), &direct, h) < 1e-10 * l2_norm(&direct, h));
        let fft = ctx.apply_hamiltonian(u.values());
        assert!(dist(&fft, &direct, h) < 1e-10 * l2_norm(&direct, h));

        let f = |l: f64| 1.0 / (1.0 + l * l);
        let g = |l: f64| (0.3 * l).cos();
        let fg = ctx.apply_function(&u, |l| f(l) * g(l)).unwrap();
        let composed = ctx.apply_function(&ctx.apply_function(&u, g).unwrap(), f).unwrap();
        assert!(dist(fg.values(), composed.values(), h) < 1e-10 * l2_norm(u.values(), h));
        // contraction by sup |f| = 1
        assert!(l2_norm(fg.values(), h) <= l2_norm(u.values(), h) * (1.0 + 1e-12));
    }
    let u = random_field(&ctx, 0, 3.0);
    assert!(matches!(
        ctx.apply_function(&u, |l| if l < 0.0 { f64::NAN } else { 1.0 }),
        Err(LabError::UndefinedFunction { .. })
    ));
}

#[test]
fn bernstein_ratio_stays_bounded() {
    let ctx = well(20.0, 512, 2.0);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let u = random_field(&ctx, seed, 4.0);
        for n in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            for flavor in [Flavor::Flat, Flavor::Distorted] {
                worst = worst.max(bernstein_ratio(&ctx, n, &u, flavor).unwrap());
            }
        }
    }
    eprintln!("bernstein constant {worst:.4}");
    assert!(worst > 0.0 && worst < 2.0);
}

#[test]
fn cross_localization_matches_the_assembled_operator() {
    // Independent route: assemble flat_K o distorted_N column by column from
    // the block multipliers and take its full SVD.
    let ctx = well(20.0, 256, 2.0);
    let n_pts = ctx.len();
    let h = ctx.spacing();
    for (k, n) in [(2.0, 2.0), (4.0, 2.0), (1.0, 4.0), (8.0, 2.0), (16.0, 2.0)] {
        let direct = cross_localization_norm(&ctx, k, n).unwrap();
        assert!(direct <= 1.0 + 1e-12);
        let mut m = faer::Mat::<C64>::zeros(n_pts, n_pts);
        for j in 0..n_pts {
            let mut e = vec![C64::new(0.0, 0.0); n_pts];
            // unit vector in the weighted l2 of the grid
            e[j] = C64::new(1.0 / h.sqrt(), 0.0);
            let col = lp_block(&ctx, k, &lp_block(&ctx, n, &SpectralField::new(e), Flavor::Distorted).unwrap(), Flavor::Flat)
                .unwrap();
            for (i, v) in col.values().iter().enumerate() {
                m[(i, j)] = v * h.sqrt();
            }
        }
        let svd = m.singular_values().unwrap();
        let top = svd.iter().copied().fold(0.0, f64::max);
        eprintln!("K={k} N={n}: {direct:.6e} vs {top:.6e}");
        assert!((top - direct).abs() < 1e-10 * direct.max(1e-2), "K={k} N={n}: {direct} vs {top}");
    }
    let flat = free(20.0, 256);
    assert_eq!(cross_localization_norm(&flat, 1.0, 4.0).unwrap(), 0.0);
    assert_eq!(cross_localization_norm(&flat, 16.0, 4.0).unwrap(), 0.0);
}

#[test]
fn sobolev_norms_are_equivalent() {
    let h_ratio = |ctx: &OperatorContext| {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for seed in 0..100 {
            let u = smooth_field(ctx, seed, 3.0);
            let pc = ctx.projector_continuous(&u).unwrap();
            let r = sobolev_norm(ctx, &pc, 0.5, Flavor::Distorted, 0.0).unwrap()
                / sobolev_norm(ctx, &pc, 0.5, Flavor::Flat, 0.0).unwrap();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        hi.max(1.0 / lo)
    };
    let c1 = h_ratio(&well(20.0, 256, 2.0));
    let c2 = h_ratio(&well(20.0, 512, 2.0));
    eprintln!("equivalence constant {c1:.5} (n=256) {c2:.5} (n=512)");
    assert!(c1 < 2.0 && (c1 - c2).abs() < 0.05 * c1);

    let ctx = well(20.0, 256, 2.0);
    let u = random_field(&ctx, 1, 3.0);
    let l2 = l2_norm(u.values(), ctx.spacing());
    for flavor in [Flavor::Flat, Flavor::Distorted] {
        assert!((sobolev_norm(&ctx, &u, 0.0, flavor, 0.0).unwrap() - l2).abs() < 1e-14 * l2);
    }
    assert!(matches!(
        sobolev_norm(&ctx, &u, -0.5, Flavor::Distorted, 0.0),
        Err(LabError::NegativeSobolevIndex { .. })
    ));
    let weighted = sobolev_norm(&ctx, &u, 0.0, Flavor::Flat, -1.0).unwrap();
    assert!(weighted < l2);

    let flat = free(20.0, 256);
    let u = random_field(&flat, 2, 3.0);
    for (s, sigma) in [(0.5, 0.0), (1.0, -0.6), (2.0, 0.0)] {
        let a = sobolev_norm(&flat, &u, s, Flavor::Flat, sigma).unwrap();
        let b = sobolev_norm(&flat, &u, s, Flavor::Distorted, sigma).unwrap();
        assert!((a - b).abs() < 1e-10 * a, "s={s}: {a} vs {b}");
    }
}

#[test]
fn square_function_is_two_sided_equivalent() {
    let ctx = well(20.0, 256, 2.0);
    let h = ctx.spacing();
    for p in [2.0, 4.0, 6.0] {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for seed in 0..100 {
            let u = smooth_field(&ctx, seed, 3.0);
            let sf: Vec<C64> = square_function(&ctx, &u, Flavor::Distorted)
                .unwrap()
                .into_iter()
                .map(|v| C64::new(v, 0.0))
                .collect();
            let r = nls_lab::spectral::field::lp_norm(&sf, h, p) / nls_lab::spectral::field::lp_norm(u.values(), h, p);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        eprintln!("p={p}: square function ratio in [{lo:.4}, {hi:.4}]");
        assert!(lo > 0.4 && hi <= 1.0 + 1e-12);
    }
}

#[test]
fn single_mode_passes_its_block() {
    let ctx = free(8.0 * std::f64::consts::PI, 256);
    let u: Vec<C64> = ctx.grid().nodes().iter().map(|x| C64::from_polar(1.0, 4.0 * x)).collect();
    assert_eq!(block_symbol(frequency_of(16.0), 4.0), 1.0);
    let b = lp_block(&ctx, 4.0, &SpectralField::new(u.clone()), Flavor::Flat).unwrap();
    assert!(dist(b.values(), &u, ctx.spacing()) < 1e-12);
    assert!(lp_block(&ctx, 3.0, &SpectralField::new(u), Flavor::Flat).is_err());
}

fn shared_well() -> &'static OperatorContext {
    static CTX: std::sync::OnceLock<OperatorContext> = std::sync::OnceLock::new();
    CTX.get_or_init(|| well(20.0, 256, 2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blocks_sum_to_the_identity(seed in any::<u64>(), width in 0.5f64..6.0, distorted in any::<bool>()) {
        let ctx = shared_well();
        let h = ctx.spacing();
        let flavor = if distorted { Flavor::Distorted } else { Flavor::Flat };
        let u = random_field(ctx, seed, width);
        let mut acc = vec![C64::new(0.0, 0.0); ctx.len()];
        for block in covering_blocks(ctx) {
            let b = apply_block(ctx, block, &u, flavor).unwrap();
            for (a, v) in acc.iter_mut().zip(b.values()) {
                *a += v;
            }
        }
        prop_assert!(dist(&acc, u.values(), h) < 1e-10 * l2_norm(u.values(), h));
    }

    #[test]
    fn propagation_is_unitary(seed in any::<u64>(), t in -5.0f64..5.0) {
        let ctx = shared_well();
        let u = random_field(ctx, seed, 2.0);
        let v = ctx.propagate(&u, t).unwrap();
        let (a, b) = (ctx.norm(u.values()), ctx.norm(v.values()));
        prop_assert!((a - b).abs() < 1e-12 * a);
    }
}
