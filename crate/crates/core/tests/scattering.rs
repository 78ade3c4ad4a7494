use nls_lab::rng::{complex_gaussian, stream_rng};
use nls_lab::scattering::*;
use nls_lab::spectral::cutoff::{block_symbol, frequency_of};
use nls_lab::spectral::field::{l2_norm, lp_norm, sub, sup_norm};
use nls_lab::spectral::{lp_block, Flavor, Grid1D, OperatorContext, PotentialSpec, SpectralField};
use nls_lab::{LabError, C64};

fn well(l: f64, n: usize) -> OperatorContext {
    let g = Grid1D::new(l, n).unwrap();
    let v = PotentialSpec::sech_squared(&g, 2.0, 1.0).unwrap();
    OperatorContext::build(g, v, 1).unwrap()
}

fn free(l: f64, n: usize) -> OperatorContext {
    let g = Grid1D::new(l, n).unwrap();
    OperatorContext::build(g, PotentialSpec::zero(&g), 1).unwrap()
}

fn gaussian(ctx: &OperatorContext, center: f64, width: f64, k: f64) -> SpectralField {
    SpectralField::new(
        ctx.grid()
            .nodes()
            .iter()
            .map(|x| {
                let y = (x - center) / width;
                C64::from_polar((-0.5 * y * y).exp(), k * x)
            })
            .collect(),
    )
}

fn random_field(ctx: &OperatorContext, seed: u64, stream: u64, width: f64) -> Vec<C64> {
    let mut rng = stream_rng(seed, stream);
    ctx.grid()
        .nodes()
        .iter()
        .map(|x| complex_gaussian(&mut rng, 1.0) * (-x * x / (2.0 * width * width)).exp())
        .collect()
}

fn rel(a: &[C64], b: &[C64], h: f64) -> f64 {
    l2_norm(&sub(a, b), h) / l2_norm(b, h)
}

#[test]
fn resolvent_of_free_fourier_mode_is_diagonal() {
    let ctx = free(10.0, 128);
    let k = 3.0 * std::f64::consts::PI / 10.0;
    let f = SpectralField::new(ctx.grid().nodes().iter().map(|x| C64::from_polar(1.0, k * x)).collect());
    let lambda = 2.0;
    let r = resolvent_limit(&ctx, lambda, &f, &ResolventOptions::default()).unwrap();
    let expected: Vec<C64> = f.values().iter().map(|v| v / (k * k - lambda)).collect();
    assert!(rel(r.value.values(), &expected, ctx.spacing()) < 1e-9);
}

#[test]
fn resolvent_extrapolation_on_the_well() {
    let ctx = well(20.0, 256);
    let f = gaussian(&ctx, 1.0, 1.5, 0.5);
    let r = resolvent_limit(&ctx, 1.3, &f, &ResolventOptions::default()).unwrap();
    let h = ctx.spacing();
    let moved = rel(r.value.values(), &r.smallest_eps, h);
    assert!(moved > 0.0);
    assert!(r.residual <= 1e-6, "residual {:.3e}", r.residual);
    for w in r.defects.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..5.0).contains(&ratio), "defect ratio {ratio}");
    }
}

#[test]
fn resolvent_refuses_eigenvalues() {
    let ctx = well(20.0, 256);
    let f = gaussian(&ctx, 0.0, 1.0, 0.0);
    let lam = ctx.eigenvalues()[10];
    match resolvent_limit(&ctx, lam, &f, &ResolventOptions::default()) {
        Err(LabError::ResolventBlowUp { nearest, .. }) => assert_eq!(nearest, lam),
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn free_plane_wave_is_exact() {
    let ctx = free(20.0, 256);
    let (e, info) = solve_plane_wave(&ctx, 1.25).unwrap();
    for (x, v) in ctx.grid().nodes().iter().zip(&e) {
        assert_eq!(*v, C64::from_polar(1.0, 1.25 * x));
    }
    assert_eq!(info.residual, 0.0);
}

#[test]
fn well_plane_wave_residual_and_gauge() {
    let ctx = well(40.0, 2048);
    let (_, info) = solve_plane_wave(&ctx, 1.0).unwrap();
    eprintln!("helmholtz residual at xi = 1: {:.3e} on {} nodes", info.residual, info.support);
    assert!(info.residual <= 1e-6);

    // box level near xi^2 = 1 and its eigen cluster
    let lam = ctx.eigenvalues();
    let k = (0..lam.len()).min_by(|&a, &b| (lam[a] - 1.0).abs().total_cmp(&(lam[b] - 1.0).abs())).unwrap();
    let cluster: Vec<usize> = (0..lam.len()).filter(|&j| (lam[j] - lam[k]).abs() < 1e-8).collect();
    assert_eq!(cluster.len(), 2);
    let (e, _) = solve_plane_wave(&ctx, lam[k].sqrt()).unwrap();
    let u = ctx.eigenvectors();
    let h = ctx.spacing();
    let mut proj = vec![C64::new(0.0, 0.0); e.len()];
    for &j in &cluster {
        let c: C64 = (0..e.len()).map(|i| e[i] * u[(i, j)]).sum();
        for (i, p) in proj.iter_mut().enumerate() {
            *p += c * u[(i, j)];
        }
    }
    let align = rel(&proj, &e, h);
    eprintln!("alignment with eigen cluster: {align:.3e}");
    assert!(align <= 1e-4);
}

#[test]
fn singular_plane_wave_names_the_energy() {
    let ctx = well(20.0, 256);
    match solve_plane_wave(&ctx, 0.0) {
        Err(LabError::InvalidArgument(_)) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn free_transform_is_the_dft() {
    let ctx = free(10.0, 64);
    let t = build_transform(&ctx, Route::Eigenbasis, &TransformOptions::default()).unwrap();
    assert_eq!(t.len(), 64);
    let xs = ctx.grid().nodes();
    let l = ctx.grid().half_length();
    for j in 0..t.len() {
        let xi = t.momenta()[j];
        let col = t.eigenfunction(j);
        let phase = col[0] / C64::from_polar(1.0 / (2.0 * l).sqrt(), xi * xs[0]);
        if xi.abs() >= ctx.grid().k_max() - 1e-9 {
            continue;
        }
        assert!((phase.norm() - 1.0).abs() < 1e-10, "xi {xi}");
        for (x, v) in xs.iter().zip(&col) {
            let expected = phase * C64::from_polar(1.0 / (2.0 * l).sqrt(), xi * x);
            assert!((v - expected).norm() < 1e-10, "xi {xi} err {:.3e}", (v - expected).norm());
        }
    }
}

#[test]
fn eigen_route_plancherel_and_diagonalization() {
    let ctx = well(20.0, 256);
    let t = build_transform(&ctx, Route::Eigenbasis, &TransformOptions::default()).unwrap();
    let h = ctx.spacing();
    let energies = t.energies();
    let mut worst_iso = 0.0f64;
    let mut worst_diag = 0.0f64;
    for s in 0..100 {
        let u = random_field(&ctx, 5, s, 3.0);
        let fu = t.forward(&u).unwrap();
        let pc = ctx.projector_continuous(&SpectralField::new(u.clone())).unwrap();
        let iso = fu.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        worst_iso = worst_iso.max((iso - l2_norm(pc.values(), h)).abs() / l2_norm(&u, h));
        let fhu = t.forward(&ctx.apply_hamiltonian(&u)).unwrap();
        let r: f64 = fhu
            .iter()
            .zip(&fu)
            .zip(&energies)
            .map(|((a, b), e)| (a - b * e).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst_diag = worst_diag.max(r / l2_norm(&u, h));
        // F^dagger F = P_c
        let back = t.adjoint(&fu).unwrap();
        assert!(rel(&back, pc.values(), h) < 1e-8);
        // F P_p = 0
        let pp = ctx.projector_point(&SpectralField::new(u)).unwrap();
        let leak = t.forward(pp.values()).unwrap();
        assert!(leak.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-10);
    }
    eprintln!("plancherel {worst_iso:.3e} diagonalization {worst_diag:.3e}");
    assert!(worst_iso <= 1e-8);
    assert!(worst_diag <= 1e-8);
    assert!(t.coisometry_defect() <= 1e-8);
}

#[test]
fn multipliers_match_functional_calculus() {
    let ctx = well(20.0, 256);
    let t = build_transform(&ctx, Route::Eigenbasis, &TransformOptions::default()).unwrap();
    let h = ctx.spacing();
    let u = SpectralField::new(random_field(&ctx, 9, 0, 3.0));
    let pc = ctx.projector_continuous(&u).unwrap();
    let one = distorted_multiplier(&t, |_| C64::new(1.0, 0.0), &u).unwrap();
    assert!(rel(one.values(), pc.values(), h) < 1e-10);

    let f = |l: f64| (-(l - 2.0).powi(2)).exp();
    let m = distorted_multiplier(&t, |xi| C64::new(f(xi * xi), 0.0), &u).unwrap();
    let direct = ctx.apply_function(&pc, f).unwrap();
    assert!(rel(m.values(), direct.values(), h) < 1e-8);

    let n = 4.0;
    let m = distorted_multiplier(&t, |xi| C64::new(block_symbol(xi.abs(), n), 0.0), &u).unwrap();
    let block = lp_block(&ctx, n, &pc, Flavor::Distorted).unwrap();
    assert!(rel(m.values(), block.values(), h) < 1e-8);

    // contraction by sup |m|
    let m = distorted_multiplier(&t, |xi| C64::from_polar(0.7, xi), &u).unwrap();
    assert!(l2_norm(m.values(), h) <= 0.7 * l2_norm(u.values(), h) + 1e-12);

    match distorted_multiplier(&t, |_| C64::new(f64::INFINITY, 0.0), &u) {
        Err(LabError::UndefinedFunction { .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn indicator_multiplier_sup_bound_is_stable() {
    let mut constants = Vec::new();
    for n in [512, 1024] {
        let ctx = well(40.0, n);
        let t = build_transform(&ctx, Route::Eigenbasis, &TransformOptions { xi_max: Some(6.0), ..Default::default() })
            .unwrap();
        let (a, b) = (1.0, 2.0);
        let c = indicator_sup_bound(&t, a, b) / (b - a).sqrt();
        // the bound is attained by f = sum conj(psi_j(x*)) psi_j
        let xs = ctx.grid().nodes();
        let i = (0..xs.len()).min_by(|&p, &q| xs[p].abs().total_cmp(&xs[q].abs())).unwrap();
        let coeff: Vec<C64> = (0..t.len())
            .map(|j| if (a..=b).contains(&t.momenta()[j]) { t.eigenfunction(j)[i].conj() } else { C64::new(0.0, 0.0) })
            .collect();
        let f = t.adjoint(&coeff).unwrap();
        let mf = distorted_multiplier(&t, |xi| C64::new(if (a..=b).contains(&xi) { 1.0 } else { 0.0 }, 0.0), &SpectralField::new(f.clone())).unwrap();
        let ratio = sup_norm(mf.values()) / l2_norm(&f, ctx.spacing());
        assert!(ratio <= c * (b - a).sqrt() * (1.0 + 1e-10));
        constants.push(c);
    }
    eprintln!("indicator constants {constants:?}");
    assert!((constants[0] - constants[1]).abs() / constants[1] < 0.05);
}

#[test]
fn two_routes_agree() {
    let ctx = well(20.0, 512);
    let opts = TransformOptions { xi_max: Some(3.0), ..Default::default() };
    let eig = build_transform(&ctx, Route::Eigenbasis, &opts).unwrap();
    let ls = build_transform(&ctx, Route::LippmannSchwinger, &opts).unwrap();
    assert_eq!(eig.len(), ls.len());
    eprintln!("ls coisometry defect {:.3e}", ls.coisometry_defect());
    let h = ctx.spacing();
    let smooth = |xi: f64| C64::new((-(xi * xi - 2.0).powi(2) * 2.0).exp(), 0.0);
    let mut worst = 0.0f64;
    for s in 0..5 {
        let u = SpectralField::new(random_field(&ctx, 13, s, 2.0));
        let a = distorted_multiplier(&eig, smooth, &u).unwrap();
        let b = distorted_multiplier(&ls, smooth, &u).unwrap();
        worst = worst.max(rel(b.values(), a.values(), h));
    }
    eprintln!("route disagreement {worst:.3e}");
    assert!(worst <= 1e-4);
}

#[test]
fn free_wave_operator_is_identity() {
    let ctx = free(80.0, 1024);
    let f = gaussian(&ctx, 0.0, 1.0, 1.0);
    let w = wave_operator_apply(&ctx, &f, 5.0, &[], &WaveOptions::default()).unwrap();
    assert!(rel(w.value.values(), f.values(), ctx.spacing()) < 1e-10);
}

#[test]
fn wave_operator_intertwines() {
    let ctx = well(400.0, 2048);
    let u = gaussian(&ctx, 0.0, 2.0, 0.0);
    let f = |l: f64| block_symbol(frequency_of(l), 1.0);
    let r = intertwining_residual(&ctx, &u, f, 50.0).unwrap();
    eprintln!("intertwining residual {r:.3e}");
    assert!(r <= 1e-3);

    let data = SpectralField::new(ctx.fourier().multiplier(u.values(), |k| C64::new(block_symbol(k.abs(), 1.0), 0.0)));
    let w = wave_operator_apply(&ctx, &data, 50.0, &[], &WaveOptions::default()).unwrap();
    eprintln!("increments {:?}", w.increments);
    let fourier_side = wave_operator_fourier(&ctx, &data).unwrap();
    let d = rel(w.value.values(), fourier_side.values(), ctx.spacing());
    eprintln!("W(50) vs F_V^* F: {d:.3e}");
    assert!(d <= 1e-2);
}

#[test]
fn wave_operator_reports_leakage() {
    let ctx = well(20.0, 256);
    let f = gaussian(&ctx, 0.0, 1.0, 3.0);
    match wave_operator_apply(&ctx, &f, 20.0, &[], &WaveOptions::default()) {
        Err(LabError::MassLeakage { suggested_half_length, .. }) => assert!(suggested_half_length > 20.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wave_operator_lp_ratios_stay_bounded() {
    let ctx = well(200.0, 2048);
    let h = ctx.spacing();
    let mut worst = [0.0f64; 3];
    for s in 0..50u64 {
        let mut rng = stream_rng(21, s);
        let center = complex_gaussian(&mut rng, 4.0).re;
        let k = complex_gaussian(&mut rng, 2.0).re;
        let width = 1.0 + complex_gaussian(&mut rng, 0.5).norm();
        let xs = ctx.grid().nodes();
        let u: Vec<C64> = xs
            .iter()
            .map(|x| {
                let y = (x - center) / (3.0 * width);
                if y.abs() < 1.0 {
                    C64::from_polar((1.0 - 1.0 / (1.0 - y * y)).exp(), k * x)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        let w = wave_operator_apply(&ctx, &SpectralField::new(u.clone()), 5.0, &[], &WaveOptions { leak_threshold: 1e-8 })
            .unwrap();
        for (slot, p) in [2.0, 4.0, f64::INFINITY].into_iter().enumerate() {
            worst[slot] = worst[slot].max(lp_norm(w.value.values(), h, p) / lp_norm(&u, h, p));
        }
    }
    eprintln!("sampled L^p ratios (2, 4, inf): {worst:?}");
    assert!(worst[0] <= 1.0 + 1e-10);
    assert!(worst[1] < 3.0 && worst[2] < 3.0);
}

#[test]
fn travelling_pairs_carry_direction_on_a_reflecting_well() {
    let g = Grid1D::new(40.0, 256).unwrap();
    let ctx = OperatorContext::build(g, PotentialSpec::sech_squared(&g, 1.0, 1.0).unwrap(), 1).unwrap();
    let h = ctx.spacing();
    let u = ctx.projector_continuous(&gaussian(&ctx, -15.0, 2.0, 2.0)).unwrap();
    let backward_share = |split_pairs| {
        let opts = TransformOptions { split_pairs, ..TransformOptions::default() };
        let t = build_transform(&ctx, Route::Eigenbasis, &opts).unwrap();
        assert!(t.coisometry_defect() < 1e-10);
        let c = t.forward(u.values()).unwrap();
        // Plancherel survives the pair rotation
        let total: f64 = c.iter().map(|v| v.norm_sqr()).sum();
        assert!((total.sqrt() - l2_norm(u.values(), h)).abs() < 1e-10 * total.sqrt());
        let back: f64 = c.iter().zip(t.momenta()).filter(|(_, xi)| **xi < 0.0).map(|(v, _)| v.norm_sqr()).sum();
        back / total
    };
    let travelling = backward_share(SplitPairs::Travelling);
    let standing = backward_share(SplitPairs::Standing);
    eprintln!("backward share: travelling {travelling:.3e} standing {standing:.3e}");
    assert!(travelling < 1e-3);
    assert!(standing > 0.2);
}
