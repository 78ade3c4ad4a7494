use nls_lab::evolution::EvolutionConfig;
use nls_lab::groundstate::{loglog_slope, BranchInterpolant, GroundStateOptions};
use nls_lab::modulation::*;
use nls_lab::rng::{complex_gaussian, stream_rng};
use nls_lab::spectral::field::{l2_norm, real_inner};
use nls_lab::spectral::{Grid1D, OperatorContext, PotentialSpec, SpectralField};
use nls_lab::{LabError, C64};

const I: C64 = C64::new(0.0, 1.0);

fn setup() -> (OperatorContext, BranchInterpolant) {
    let g = Grid1D::new(20.0, 256).unwrap();
    let ctx = OperatorContext::build(g, PotentialSpec::sech_squared(&g, 1.0, 1.0).unwrap(), 1).unwrap();
    let br = BranchInterpolant::build(&ctx, 0.12, 12, &GroundStateOptions::default()).unwrap();
    (ctx, br)
}

fn random_continuous(ctx: &OperatorContext, seed: u64) -> Vec<C64> {
    let mut rng = stream_rng(seed, 0);
    let xs = ctx.grid().nodes();
    let raw: Vec<C64> = xs.iter().map(|x| complex_gaussian(&mut rng, 1.0) * (-x * x / 8.0).exp()).collect();
    // smooth it so the field is resolved
    let smooth = ctx.apply_function(&SpectralField::new(raw), |l| (-0.05 * l.max(0.0)).exp()).unwrap();
    let mut v = ctx.projector_continuous(&smooth).unwrap().into_values();
    let n = l2_norm(&v, ctx.spacing());
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn dist(a: &[C64], b: &[C64], h: f64) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2_norm(&d, h)
}

#[test]
fn decomposes_exact_ground_states() {
    let (ctx, br) = setup();
    for z in [C64::new(0.07, 0.0), C64::from_polar(0.05, 0.7)] {
        let q = br.evaluate(z, false).unwrap().q;
        let s = decompose(&ctx, &br, &q, None, None, &DecomposeOptions::default()).unwrap();
        assert!((s.z - z).norm() < 1e-10);
        assert!(l2_norm(&s.eta, ctx.spacing()) < 1e-10);
        assert!(s.residual[0].hypot(s.residual[1]) <= 1e-10);
    }
}

#[test]
fn recovers_constructed_decompositions() {
    let (ctx, br) = setup();
    let h = ctx.spacing();
    let z = C64::from_polar(0.06, -1.1);
    let w = r_operator(&ctx, &br, z, &random_continuous(&ctx, 3)).unwrap().field;
    let p = br.evaluate(z, false).unwrap();
    for j in 0..2 {
        let iw: Vec<C64> = w.iter().map(|v| I * v).collect();
        assert!(real_inner(&iw, &p.dq[j], h).abs() < 1e-10);
    }
    let psi: Vec<C64> = p.q.iter().zip(&w).map(|(a, b)| a + 1e-3 * b).collect();
    let s = decompose(&ctx, &br, &psi, None, None, &DecomposeOptions::default()).unwrap();
    assert!((s.z - z).norm() < 1e-9);
    let target: Vec<C64> = w.iter().map(|v| 1e-3 * v).collect();
    assert!(dist(&s.eta, &target, h) < 1e-9);

    // generic perturbation including a bound-state component
    let mut rng = stream_rng(4, 0);
    let psi: Vec<C64> = p.q.iter().map(|a| a + complex_gaussian(&mut rng, 1e-6)).collect();
    let s = decompose(&ctx, &br, &psi, None, None, &DecomposeOptions::default()).unwrap();
    assert!(s.residual[0].hypot(s.residual[1]) <= 1e-10);
    let q = br.evaluate(s.z, false).unwrap().q;
    let back: Vec<C64> = q.iter().zip(&s.eta).map(|(a, b)| a + b).collect();
    assert!(dist(&back, &psi, h) < 1e-12);
    assert!(back.iter().zip(&psi).all(|(a, b)| (a - b).norm() < 1e-12));

    for f in [0.8, 1.2] {
        let other = decompose(&ctx, &br, &psi, Some(s.z * f), None, &DecomposeOptions::default()).unwrap();
        assert!((other.z - s.z).norm() < 1e-9);
    }
}

#[test]
fn decomposition_errors() {
    let (ctx, br) = setup();
    let q = br.evaluate(C64::new(0.05, 0.0), false).unwrap().q;
    let big: Vec<C64> = q.iter().map(|v| v * 4.0).collect();
    assert!(matches!(
        decompose(&ctx, &br, &big, None, None, &DecomposeOptions::default()),
        Err(LabError::BranchRange { .. }) | Err(LabError::NonConvergence { .. })
    ));
    assert!(matches!(
        decompose(&ctx, &br, &q[1..], None, None, &DecomposeOptions::default()),
        Err(LabError::ShapeMismatch { .. })
    ));
}

#[test]
fn r_operator_scaling() {
    let (ctx, br) = setup();
    let u = random_continuous(&ctx, 9);
    let r0 = r_operator(&ctx, &br, C64::new(0.0, 0.0), &u).unwrap();
    assert!(dist(&r0.field, &u, ctx.spacing()) <= 1e-10);
    let zs: Vec<f64> = (0..8).map(|i| 0.01 * 10f64.powf(i as f64 / 7.0)).collect();
    let alphas: Vec<f64> = zs
        .iter()
        .map(|&r| r_operator(&ctx, &br, C64::from_polar(r, 0.3), &u).unwrap().alpha.norm())
        .collect();
    let slope = loglog_slope(&zs, &alphas).unwrap();
    eprintln!("|alpha| slope {slope:.4}");
    assert!((slope - 2.0).abs() < 0.3);
    let mut bumped = u.clone();
    let phi = ctx.ground_state().unwrap();
    bumped.iter_mut().zip(&phi).for_each(|(a, f)| *a += 0.1 * f);
    assert!(matches!(
        r_operator(&ctx, &br, C64::new(0.05, 0.0), &bumped),
        Err(LabError::InvalidArgument(_))
    ));
}

#[test]
fn modulation_matrix_and_remainder() {
    let (ctx, br) = setup();
    let n = ctx.len();
    let zero = vec![C64::new(0.0, 0.0); n];
    let j0 = [[0.0, -1.0], [1.0, 0.0]];
    let r = modulation_rhs(&ctx, &br, C64::new(1e-5, 0.0), &zero, RemainderForm::Exact).unwrap();
    assert_eq!(r.w, C64::new(0.0, 0.0));
    for (row, want) in r.a.iter().zip(&j0) {
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-8);
        }
    }
    let zs = [0.02, 0.04, 0.08];
    let mut defects = Vec::new();
    for z in zs {
        let r = modulation_rhs(&ctx, &br, C64::from_polar(z, 1.0), &zero, RemainderForm::Exact).unwrap();
        let d = r.a.iter().flatten().zip(j0.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        defects.push(d);
    }
    eprintln!("||A - J0|| = {defects:?}");
    assert!(defects.iter().zip(zs).all(|(d, z)| *d < z * z));
    // the correction to Q is orthogonal to phi0 and cubic, so the defect is quartic
    let slope = loglog_slope(&zs, &defects).unwrap();
    assert!((slope - 4.0).abs() < 0.3);

    // the exact remainder is quadratic in eta
    let z = C64::new(0.05, 0.0);
    let eta = r_operator(&ctx, &br, z, &random_continuous(&ctx, 5)).unwrap().field;
    let q = br.evaluate(z, false).unwrap().q;
    let h = ctx.spacing();
    let mut exact = Vec::new();
    for s in [1e-2, 1e-3, 1e-4] {
        let e: Vec<C64> = eta.iter().map(|v| v * s).collect();
        let f = remainder(&ctx, &q, &e, 1.0, RemainderForm::Exact);
        let shown = remainder(&ctx, &q, &e, 1.0, RemainderForm::Displayed);
        assert!(dist(&f, &shown, h) > 0.1 * l2_norm(&f, h));
        exact.push(l2_norm(&f, h) / (s * s));
    }
    eprintln!("exact F / s^2 {exact:?}");
    assert!(exact.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() < 0.05));
}

fn bump_recipe(z0: [f64; 2], amplitude: f64) -> DataRecipe {
    DataRecipe {
        z0,
        perturbation: BumpRecipe {
            amplitude,
            width: 1.5,
            carrier: 3.0,
            center: -6.0,
        },
        perturbation_seed: 2,
        randomized: None,
    }
}

#[test]
fn soliton_is_a_fixed_point_of_m() {
    let (ctx, br) = setup();
    let data = prepare_data(&ctx, &br, &bump_recipe([0.05, 0.0], 0.0), None).unwrap();
    let cfg = StabilityConfig::new(EvolutionConfig::new(1e-3, 20.0, 10));
    let rec = stability_experiment(&ctx, &br, &data, &cfg).unwrap();
    assert!(rec.truncated.is_none());
    assert_eq!(rec.len(), 2001);
    let z0 = C64::new(0.05, 0.0);
    let dev = rec.m.iter().map(|m| (m - z0).norm()).fold(0.0, f64::max);
    eprintln!("max |m - z0| = {dev:.3e}");
    assert!(dev <= 1e-5);
    for k in 0..rec.len() {
        assert!((rec.m[k] * C64::from_polar(1.0, -rec.theta[k]) - rec.z[k]).norm() <= 1e-12);
    }
    assert!(rec.mdot_integral.windows(2).all(|w| w[1] >= w[0]));
    assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
    let csv = rec.to_csv();
    assert_eq!(csv.lines().count(), rec.len() + 1);
    assert!(csv.starts_with("t,re_z,im_z,re_m,im_m,"));

    let quiet = ModulationRecord {
        times: vec![0.0, 1.0],
        pp_norm: vec![0.0, 0.0],
        pp_bound: vec![0.0, 0.0],
        ..Default::default()
    };
    let r = radiation_discrete_part(&quiet);
    assert!(r.norms.iter().all(|v| *v == 0.0) && r.final_over_max == 0.0);
}

#[test]
fn perturbed_run_diagnostics() {
    let (ctx, br) = setup();
    let data = prepare_data(&ctx, &br, &bump_recipe([0.05, 0.0], 1e-3), None).unwrap();
    let mut residual_constants = Vec::new();
    let mut records = Vec::new();
    for dt in [1e-3, 5e-4] {
        let cfg = StabilityConfig::new(EvolutionConfig::new(dt, 4.0, 10));
        let rec = stability_experiment(&ctx, &br, &data, &cfg).unwrap();
        assert!(rec.truncated.is_none());
        residual_constants.push(rec.max_ode_residual() / (dt * dt + 1e-10));
        records.push(rec);
    }
    eprintln!("ode residual constants {residual_constants:?}");
    assert!(residual_constants[1] / residual_constants[0] < 2.0 && residual_constants[0] / residual_constants[1] < 2.0);

    let rec = &records[0];
    let rad = radiation_discrete_part(rec);
    eprintln!("P_p eta: max {:.3e} final {:.3e} bound constant {:.4}", rad.max, rad.final_value, rad.bound_constant);
    assert!(rad.bound_constant < 1.5);
    assert!(rec.orthogonality_residual.iter().all(|r| *r <= 1e-10));
    let summary = rec.summary(0.8);
    assert_eq!(summary.samples, rec.len());
    let json = serde_json::to_string(&summary).unwrap();
    assert!(json.contains("tail_variation"));

    // gauge covariance of the whole experiment
    let theta = 0.9;
    let cfg = StabilityConfig::new(EvolutionConfig::new(1e-3, 4.0, 10));
    let rot = stability_experiment(&ctx, &br, &data.rotated(theta), &cfg).unwrap();
    let g = C64::from_polar(1.0, theta);
    for k in 0..rec.len() {
        assert!((rot.z[k] - rec.z[k] * g).norm() <= 1e-10);
        assert!((rot.m[k].norm() - rec.m[k].norm()).abs() <= 1e-10);
        assert!((rot.mdot_integral[k] - rec.mdot_integral[k]).abs() <= 1e-10);
    }
}

#[test]
fn mu_mismatch_is_rejected() {
    let (ctx, br) = setup();
    let data = prepare_data(&ctx, &br, &bump_recipe([0.05, 0.0], 0.0), None).unwrap();
    let mut evo = EvolutionConfig::new(1e-3, 0.1, 10);
    evo.mu = -1.0;
    assert!(matches!(
        stability_experiment(&ctx, &br, &data, &StabilityConfig::new(evo)),
        Err(LabError::InvalidArgument(_))
    ));
}
