use num_complex::Complex64 as C64;
use rand::Rng;
use serde_json::json;

use super::{ArtifactWriter, BranchBlock, Checks, EstimatesBlock, ExperimentId, NormsBlock, PlaneWavesBlock, RunConfig};
use crate::critical_norms::{adapted_norm, q_variation, DiscretePath, PathGenerator};
use crate::error::{LabError, Result};
use crate::evolution::{
    bilinear_sweep, bilinear_sweep_free, dispersive_decay, energy, local_smoothing_ratio, mass, nls_evolve_observed,
    strichartz_ratio, BilinearConfig, BilinearTable, Forcing, Generator,
};
use crate::groundstate::{build_branch, scaling_report, solve_ground_state, weighted_report, BranchInterpolant, GroundStateOptions};
use crate::modulation::{
    prepare_data, radiation_discrete_part, stability_experiment, BumpRecipe, DataRecipe, ModulationRecord,
    RandomComponent, StabilityConfig,
};
use crate::randomization::{cube_pieces, fit_tail, tail_probability_mc, LawFamily, NormFunctional, WienerPartition};
use crate::rng::{complex_gaussian, stream_rng};
use crate::scattering::{build_transform, distorted_multiplier, solve_plane_wave, Route, TransformOptions};
use crate::spectral::field::{inner, l2_norm, sup_norm};
use crate::spectral::{cross_localization_norm, Grid1D, OperatorContext, PotentialKind, PotentialSpec, SpectralField};

pub(super) fn execute(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    match cfg.experiment {
        ExperimentId::Spectrum => spectrum(cfg, w, c),
        ExperimentId::Groundstate => groundstate(cfg, w, c),
        ExperimentId::PlaneWaves => plane_waves(cfg, w, c),
        ExperimentId::RandomizeMc => randomize_mc(cfg, w, c),
        ExperimentId::Evolve => evolve(cfg, w, c),
        ExperimentId::Stability => stability(cfg, w, c),
        ExperimentId::Bilinear => bilinear(cfg, w, c),
        ExperimentId::Strichartz => strichartz(cfg, w, c),
        ExperimentId::LocalSmoothing => local_smoothing(cfg, w, c),
        ExperimentId::Norms => norms(cfg, w, c),
    }
}

fn grid(cfg: &RunConfig) -> Result<Grid1D> {
    Grid1D::new(cfg.grid.half_length, cfg.grid.n_points).map_err(|e| LabError::Config(format!("grid: {e}")))
}

fn context_with(cfg: &RunConfig, kind: PotentialKind) -> Result<OperatorContext> {
    let g = grid(cfg)?;
    let v = PotentialSpec::sample(kind, &g).map_err(|e| LabError::Config(format!("potential: {e}")))?;
    OperatorContext::build(g, v, cfg.grid.d)
}

fn context(cfg: &RunConfig) -> Result<OperatorContext> {
    context_with(cfg, cfg.potential.clone())
}

fn mu(cfg: &RunConfig) -> f64 {
    cfg.evolution.map_or(1.0, |e| e.mu)
}

fn label(s: impl std::fmt::Display) -> Option<String> {
    Some(s.to_string())
}

fn random_field(ctx: &OperatorContext, seed: u64, stream: u64, width: f64) -> Vec<C64> {
    let mut rng = stream_rng(seed, stream);
    ctx.grid()
        .nodes()
        .iter()
        .map(|x| complex_gaussian(&mut rng, 1.0) * (-x * x / (2.0 * width * width)).exp())
        .collect()
}

fn spectrum(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let lam = ctx.eigenvalues();
    let index: Vec<f64> = (0..lam.len()).map(|i| i as f64).collect();
    w.real_array("eigenvalues", &[lam.len()], lam)?;
    w.dat("eigenvalues.dat", ("index", "eigenvalue"), &index, lam)?;
    c.at_most("orthonormality", None, ctx.orthonormality_residual());
    c.at_most("hermitian_defect", None, ctx.hermitian_defect());
    let negatives = ctx.negative_indices().len();
    c.record("negative_eigenvalues", None, negatives as f64);
    let mut exact = None;
    if let Some(e0) = ctx.ground_energy() {
        c.record("e0", None, e0);
        if let PotentialKind::SechSquared { depth, width } = cfg.potential {
            // -l(l+1)/w^2 sech^2 has levels -(l - j)^2 / w^2
            let l = 0.5 * ((1.0 + 4.0 * depth * width * width).sqrt() - 1.0);
            let e = -(l / width).powi(2);
            c.within("e0_error", None, e0, e);
            exact = Some(e);
        }
        c.at_least("spectral_gap", None, lam[1] - lam[0]);
        let phi0 = ctx.ground_state().expect("a negative eigenvalue exists");
        w.real_array("ground_state", &[phi0.len()], &phi0)?;
        w.dat("ground_state.dat", ("x", "phi0"), &ctx.grid().nodes(), &phi0)?;
    }
    let mut summary = json!({
        "eigenvalue_count": lam.len(),
        "negative_eigenvalues": lam[..negatives].to_vec(),
        "e0_exact": exact,
        "near_zero": ctx.near_zero_eigenvalues(1e-8),
        "orthonormality": ctx.orthonormality_residual(),
        "hermitian_defect": ctx.hermitian_defect(),
    });
    if let Some(block) = cfg.spectrum.filter(|b| b.cross_localization) {
        let mut blocks = vec![1.0];
        while blocks.last().copied().unwrap_or(1.0) * 2.0 <= block.max_block {
            let next = blocks.last().copied().unwrap_or(1.0) * 2.0;
            blocks.push(next);
        }
        let mut rows = Vec::new();
        for &n in &blocks {
            for &k in &blocks {
                rows.push(vec![k, n, cross_localization_norm(&ctx, k, n)?]);
            }
        }
        w.csv("cross_localization.csv", &["k", "n", "norm"], &rows)?;
        let floor = cfg.tolerance("cross_localization_floor");
        let worst = cross_localization_worst_ratio(&rows, floor);
        c.at_most("cross_localization_decay", None, worst);
        summary["cross_localization_worst_ratio"] = json!(worst);
    }
    w.json("spectrum.json", &summary)
}

/// Largest `norm(d + 1) / norm(d)` over octave distances `d >= 3` from the
/// diagonal, ignoring values at or below `floor`.
pub fn cross_localization_worst_ratio(rows: &[Vec<f64>], floor: f64) -> f64 {
    let get = |k: f64, n: f64| rows.iter().find(|r| r[0] == k && r[1] == n).map(|r| r[2]);
    let mut worst = 0.0f64;
    for r in rows {
        let (k, n, v) = (r[0], r[1], r[2]);
        let d = (k.log2() - n.log2()).abs().round() as i32;
        if d < 3 {
            continue;
        }
        let step = if k > n { 2.0 } else { 0.5 };
        if let Some(next) = get(k * step, n) {
            if next > floor {
                worst = worst.max(next / v);
            }
        }
    }
    worst
}

fn groundstate(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let b = cfg.branch.unwrap_or_default();
    let opts = GroundStateOptions {
        mu: mu(cfg),
        ..Default::default()
    };
    let br = build_branch(&ctx, b.z_min, b.z_max, b.samples, &opts)?;
    let rows: Vec<Vec<f64>> = br
        .samples
        .iter()
        .map(|s| vec![s.modulus, s.energy, s.shift, s.residual, s.iterations as f64, s.point_leak])
        .collect();
    w.csv("branch.csv", &["modulus", "energy", "shift", "residual", "iterations", "point_leak"], &rows)?;
    let moduli: Vec<f64> = br.samples.iter().map(|s| s.modulus).collect();
    let shifts: Vec<f64> = br.samples.iter().map(|s| s.shift.abs()).collect();
    w.dat("shift.dat", ("modulus", "abs_e"), &moduli, &shifts)?;
    let last = br.samples.last().expect("at least two samples");
    w.real_array("q_largest", &[last.q_full.len()], &last.q_full)?;
    w.dat("q_largest.dat", ("x", "Q"), &ctx.grid().nodes(), &last.q_full)?;

    let sc = scaling_report(&ctx, &br)?;
    let weighted = [weighted_report(&ctx, &br, 1)?, weighted_report(&ctx, &br, 2)?];
    c.within("q_slope", None, sc.q_slope, 3.0);
    for r in &weighted {
        c.within("weighted_q_slope", label(format!("k={}", r.weight_power)), r.q_slope, 3.0);
        c.record("weighted_dq_slope", label(format!("k={}", r.weight_power)), r.dq_slope);
    }
    c.within("dq_slope", None, sc.dq_slope, 2.0);
    c.within("e_slope", None, sc.e_slope, 2.0);
    c.within("de_slope", None, sc.de_slope, 1.0);
    let worst = br.samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    c.at_most("elliptic_residual", None, worst);
    w.json("scaling.json", &json!({ "e0": br.e0, "scaling": sc, "weighted": weighted }))
}

fn plane_waves(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let pw: PlaneWavesBlock = match &cfg.plane_waves {
        Some(p) => p.clone(),
        None => serde_json::from_str("{}").expect("all fields have defaults"),
    };
    let h = ctx.spacing();
    let t = build_transform(&ctx, Route::Eigenbasis, &TransformOptions::default())?;
    let energies = t.energies();
    let (mut iso, mut diag) = (0.0f64, 0.0f64);
    let resolved = |seed: u64, s: u64| {
        let raw = random_field(&ctx, seed, s, pw.width);
        ctx.fourier().multiplier(&raw, |k| C64::new((-0.5 * (k / pw.cutoff).powi(2)).exp(), 0.0))
    };
    for s in 0..pw.samples as u64 {
        let u = resolved(pw.seed, s);
        let norm = l2_norm(&u, h);
        let fu = t.forward(&u)?;
        let pc = ctx.projector_continuous(&SpectralField::new(u.clone()))?;
        let f_norm = fu.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        iso = iso.max((f_norm - l2_norm(pc.values(), h)).abs() / norm);
        let fhu = t.forward(&ctx.apply_hamiltonian(&u))?;
        let r = fhu
            .iter()
            .zip(&fu)
            .zip(&energies)
            .map(|((a, b), e)| (a - b * e).norm_sqr())
            .sum::<f64>()
            .sqrt();
        diag = diag.max(r / norm);
    }
    c.at_most("plancherel", None, iso);
    c.at_most("diagonalization", None, diag);
    c.record("coisometry_defect", None, t.coisometry_defect());
    w.real_array("momenta", &[t.len()], t.momenta())?;

    let xs = ctx.grid().nodes();
    for (i, &xi) in pw.momenta.iter().enumerate() {
        let (e, info) = solve_plane_wave(&ctx, xi)?;
        c.at_most("helmholtz_residual", label(format!("xi={xi}")), info.residual);
        w.complex_array(&format!("plane_wave_{i}"), &[e.len()], &e)?;
        let modulus: Vec<f64> = e.iter().map(|v| v.norm()).collect();
        w.dat(&format!("plane_wave_{i}.dat"), ("x", "abs_e"), &xs, &modulus)?;
    }

    let opts = TransformOptions {
        xi_max: Some(pw.xi_max),
        ..Default::default()
    };
    let eig = build_transform(&ctx, Route::Eigenbasis, &opts)?;
    let ls = match build_transform(&ctx, Route::LippmannSchwinger, &opts) {
        Ok(t) => Some(t),
        Err(LabError::RouteUnavailable(_)) => None,
        Err(e) => return Err(e),
    };
    c.record("ls_route_available", None, if ls.is_some() { 1.0 } else { 0.0 });
    let mut agree = f64::NAN;
    if let Some(ls) = &ls {
        let smooth = |xi: f64| C64::new((-2.0 * (xi * xi - 2.0).powi(2)).exp(), 0.0);
        agree = 0.0;
        for s in 0..5 {
            let u = SpectralField::new(resolved(pw.seed.wrapping_add(1), s));
            let a = distorted_multiplier(&eig, smooth, &u)?;
            let b = distorted_multiplier(ls, smooth, &u)?;
            let d: Vec<C64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
            let scale = l2_norm(a.values(), h);
            if scale > 0.0 {
                agree = agree.max(l2_norm(&d, h) / scale);
            }
        }
        c.at_most("route_agreement", None, agree);
        c.record("ls_coisometry_defect", None, ls.coisometry_defect());
    }
    w.json(
        "plane_waves.json",
        &json!({
            "levels": t.len(),
            "plancherel": iso,
            "diagonalization": diag,
            "route_agreement": if agree.is_finite() { json!(agree) } else { json!(null) },
            "ls_levels": ls.as_ref().map(|t| t.len()),
        }),
    )
}

fn randomize_mc(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let r = cfg.randomization.clone().expect("validated");
    let opts = TransformOptions {
        split_pairs: r.split_pairs,
        ..Default::default()
    };
    let t = build_transform(&ctx, Route::Eigenbasis, &opts)?;
    let part = WienerPartition::covering(&t)?;
    let u0 = SpectralField::new(r.datum.profile(&ctx, C64::new(1.0, 0.0))?);
    let scale = l2_norm(u0.values(), ctx.spacing());
    let lambdas = r
        .lambdas
        .clone()
        .unwrap_or_else(|| (1..=400).map(|i| scale * 0.01 * i as f64).collect());
    // datum inside one cube with complex gaussian coefficients: |g| ||u0|| has
    // the tail exp(-lambda^2 / (variance ||u0||^2))
    let oracle = if r.norm == NormFunctional::DataL2 && r.law.family == LawFamily::ComplexGaussian {
        let pieces = cube_pieces(&ctx, &t, &part, &u0)?;
        let energies: Vec<f64> = pieces.iter().map(|(_, v)| l2_norm(v, ctx.spacing()).powi(2)).collect();
        let top = energies.iter().copied().fold(0.0, f64::max);
        let total: f64 = energies.iter().sum();
        (top >= (1.0 - 1e-6) * total).then(|| -1.0 / (r.law.variance * scale * scale))
    } else {
        None
    };
    let mut fits = Vec::new();
    for &seed in &r.seeds {
        let mut rep = tail_probability_mc(&ctx, &t, &part, &u0, &r.law, r.norm, &lambdas, r.samples, seed)?;
        if !rep.fit.valid {
            if let Some(s) = rep.suggested_scale {
                rep.lambdas = lambdas.iter().map(|l| l * s).collect();
                let n = rep.values.len() as f64;
                rep.probabilities = rep
                    .lambdas
                    .iter()
                    .map(|&l| rep.values.iter().filter(|&&v| v > l).count() as f64 / n)
                    .collect();
                rep.fit = fit_tail(&rep.lambdas, &rep.probabilities, rep.n_samples);
                rep.pass = rep.fit.valid && rep.fit.slope < 0.0;
            }
        }
        let tag = format!("seed={seed}");
        c.holds("tail_fit_valid", label(&tag), rep.fit.valid);
        c.at_most("tail_slope", label(&tag), rep.fit.slope);
        c.at_least("tail_r_squared", label(&tag), rep.fit.r_squared);
        if let Some(expected) = oracle {
            c.within("single_cube_slope_ratio", label(&tag), rep.fit.slope / expected, 1.0);
        }
        w.bytes(&format!("tail_seed{seed}.csv"), rep.to_csv().as_bytes())?;
        let squares: Vec<f64> = rep.lambdas.iter().map(|l| l * l).collect();
        let logs: Vec<f64> = rep.probabilities.iter().map(|p| p.ln()).collect();
        w.dat(&format!("tail_seed{seed}.dat"), ("lambda_squared", "log_p"), &squares, &logs)?;
        w.real_array(&format!("values_seed{seed}"), &[rep.values.len()], &rep.values)?;
        fits.push(json!({ "seed": seed, "fit": rep.fit, "suggested_scale": rep.suggested_scale }));
    }
    w.json("ensemble.json", &json!({ "datum_norm": scale, "cubes": part.len(), "fits": fits }))
}

fn evolve(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let e = cfg.evolve.expect("validated");
    let evo = cfg.evolution.expect("validated");
    let h = ctx.spacing();
    let z = C64::new(e.z[0], e.z[1]);
    let opts = GroundStateOptions {
        mu: evo.mu,
        ..Default::default()
    };
    let gs = solve_ground_state(&ctx, z, None, &opts)?;
    let mut psi0 = gs.field.clone();
    let soliton = e.perturbation.map_or(true, |p| p.amplitude == 0.0);
    if let Some(p) = &e.perturbation {
        let mut rng = stream_rng(e.perturbation_seed, 0);
        let phase = C64::from_polar(1.0, std::f64::consts::TAU * rng.gen::<f64>());
        let bump = p.profile(&ctx, phase)?;
        psi0.iter_mut().zip(&bump).for_each(|(a, b)| *a += b);
    }
    let q_abs: Vec<f64> = gs.field.iter().map(|v| v.norm()).collect();
    let mut rows = Vec::new();
    let mut last = psi0.clone();
    nls_evolve_observed(&ctx, &psi0, &evo, |t, psi| {
        let m = mass(psi, h);
        let en = energy(ctx.fourier(), ctx.potential().samples(), evo.mu, psi, h);
        let modulus = psi.iter().zip(&q_abs).map(|(p, q)| (p.norm() - q).abs()).fold(0.0, f64::max);
        let rot = C64::from_polar(1.0, -gs.energy * t);
        let reference: Vec<C64> = gs.field.iter().map(|q| q * rot).collect();
        let phase = inner(psi, &reference, h).arg().abs();
        rows.push(vec![t, m, en, sup_norm(psi), modulus, phase]);
        last.copy_from_slice(psi);
        Ok(true)
    })?;
    w.csv("trajectory.csv", &["t", "mass", "energy", "sup", "modulus_error", "phase_error"], &rows)?;
    w.complex_array("psi_final", &[last.len()], &last)?;
    let modulus: Vec<f64> = last.iter().map(|v| v.norm()).collect();
    w.dat("modulus_final.dat", ("x", "abs_psi"), &ctx.grid().nodes(), &modulus)?;
    let m0 = rows[0][1];
    let drift = rows.iter().map(|r| (r[1] - m0).abs() / m0).fold(0.0, f64::max);
    c.at_most("mass_drift", None, drift);
    let e0 = rows[0][2];
    c.record(
        "energy_drift",
        None,
        rows.iter().map(|r| (r[2] - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE),
    );
    if soliton {
        c.at_most("coherence_modulus", None, rows.iter().map(|r| r[4]).fold(0.0, f64::max));
        c.at_most("coherence_phase", None, rows.iter().map(|r| r[5]).fold(0.0, f64::max));
    }
    w.json(
        "evolve.json",
        &json!({ "ground_energy": gs.energy, "ground_residual": gs.residual, "samples": rows.len() }),
    )
}

fn stability(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let s = cfg.stability.expect("validated");
    let evo = cfg.evolution.expect("validated");
    let b: BranchBlock = cfg.branch.unwrap_or_default();
    let opts = GroundStateOptions {
        mu: evo.mu,
        ..Default::default()
    };
    let branch = BranchInterpolant::build(&ctx, b.z_max, b.nodes, &opts)?;
    let scfg = StabilityConfig {
        evolution: evo,
        diagnostic_stride: s.diagnostic_stride,
        remainder: s.remainder,
        decompose: s.decompose,
        sigma: s.sigma,
    };
    let random = cfg.randomization.as_ref().filter(|r| r.epsilon > 0.0);
    let transform = match random {
        Some(r) => Some(build_transform(
            &ctx,
            Route::Eigenbasis,
            &TransformOptions {
                split_pairs: r.split_pairs,
                ..Default::default()
            },
        )?),
        None => None,
    };
    let seeds: Vec<u64> = match random {
        Some(r) => r.seeds.clone(),
        None => vec![s.perturbation_seed],
    };
    let recipe = |seed: u64| DataRecipe {
        z0: s.z0,
        perturbation: s.perturbation,
        perturbation_seed: if random.is_some() { s.perturbation_seed } else { seed },
        randomized: random.map(|r| RandomComponent {
            epsilon: r.epsilon,
            datum: r.datum,
            law: r.law,
            seed,
            sample: 0,
        }),
    };
    let reference = if s.subtract_reference {
        let quiet = DataRecipe {
            z0: s.z0,
            perturbation: BumpRecipe {
                amplitude: 0.0,
                ..s.perturbation
            },
            perturbation_seed: 0,
            randomized: None,
        };
        let data = prepare_data(&ctx, &branch, &quiet, None)?;
        Some(stability_experiment(&ctx, &branch, &data, &scfg)?)
    } else {
        None
    };
    let dt = evo.dt;
    let constant = |r: &ModulationRecord, dt: f64| r.max_ode_residual() / (dt * dt + 1e-10);
    let mut summaries = Vec::new();
    let mut first_constant = None;
    for &seed in &seeds {
        let data = prepare_data(&ctx, &branch, &recipe(seed), transform.as_ref())?;
        let mut rec = stability_experiment(&ctx, &branch, &data, &scfg)?;
        if let Some(r) = &reference {
            if rec.truncated.is_none() {
                rec.subtract_reference(&ctx, r)?;
            }
        }
        let tag = format!("seed={seed}");
        c.holds("run_completed", label(&tag), rec.truncated.is_none());
        let k = constant(&rec, dt);
        first_constant.get_or_insert(k);
        c.record("ode_residual_constant", label(&tag), k);
        c.at_most("tail_variation", label(&tag), rec.tail_variation(s.tail_fraction));
        c.holds("increments_decreasing", label(&tag), rec.increments_decreasing());
        let pp = radiation_discrete_part(&rec);
        c.at_most("pp_final_over_max", label(&tag), pp.final_over_max);
        c.record("pp_bound_constant", label(&tag), pp.bound_constant);
        w.bytes(&format!("stability_seed{seed}.csv"), rec.to_csv().as_bytes())?;
        let inc: Vec<Vec<f64>> = rec.increments.iter().map(|i| vec![i.t1, i.t2, i.value]).collect();
        w.csv(&format!("increments_seed{seed}.csv"), &["t1", "t2", "value"], &inc)?;
        let modulus: Vec<f64> = rec.m.iter().map(|m| m.norm()).collect();
        w.dat(&format!("m_seed{seed}.dat"), ("t", "abs_m"), &rec.times, &modulus)?;
        summaries.push(json!({ "seed": seed, "summary": rec.summary(s.tail_fraction) }));
    }
    let mut halving = serde_json::Value::Null;
    if s.check_dt_halving {
        let mut half = scfg;
        half.evolution.dt = dt / 2.0;
        let data = prepare_data(&ctx, &branch, &recipe(seeds[0]), transform.as_ref())?;
        let rec = stability_experiment(&ctx, &branch, &data, &half)?;
        let k2 = constant(&rec, dt / 2.0);
        let k1 = first_constant.expect("at least one seed");
        c.at_most("ode_residual_ratio", None, (k1 / k2).max(k2 / k1));
        halving = json!({ "dt": dt, "constant": k1, "half_dt_constant": k2 });
    }
    w.json(
        "summary.json",
        &json!({
            "reference_subtracted": reference.is_some(),
            "seeds": summaries,
            "dt_halving": halving,
        }),
    )
}

fn bilinear_rows(t: &BilinearTable) -> Vec<Vec<f64>> {
    t.rows
        .iter()
        .map(|r| vec![r.n, r.m, r.mean_norm, r.mean_ratio, r.max_ratio, r.rejected as f64, r.half_length, r.n_points as f64])
        .collect()
}

const BILINEAR_HEADER: [&str; 8] = ["n", "m", "mean_norm", "mean_ratio", "max_ratio", "rejected", "half_length", "n_points"];

fn bilinear(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let bc: BilinearConfig = cfg.bilinear.clone().unwrap_or_default();
    let free = bilinear_sweep_free(&bc, cfg.grid.d)?;
    w.csv("bilinear_free.csv", &BILINEAR_HEADER, &bilinear_rows(&free))?;
    for &(n, slope) in &free.slopes {
        c.within("bilinear_free_slope", label(format!("n={n}")), slope, -0.5);
        let (x, y): (Vec<f64>, Vec<f64>) = free
            .rows
            .iter()
            .filter(|r| r.n == n && r.m > n)
            .map(|r| (r.m.ln(), r.mean_norm.ln()))
            .unzip();
        w.dat(&format!("bilinear_free_n{n}.dat"), ("log_m", "log_mean_norm"), &x, &y)?;
    }
    let mut perturbed = serde_json::Value::Null;
    if cfg.potential != PotentialKind::Zero {
        let ctx = context(cfg)?;
        let mut resolved = bc.clone();
        resolved.m_list.retain(|&m| 2.0 * m <= ctx.grid().k_max());
        c.record("bilinear_perturbed_m_max", None, resolved.m_list.iter().copied().fold(0.0, f64::max));
        let p = bilinear_sweep(&ctx, &resolved)?;
        w.csv("bilinear_perturbed.csv", &BILINEAR_HEADER, &bilinear_rows(&p))?;
        let worst = p.rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
        c.record("bilinear_perturbed_max_ratio", None, worst);
        perturbed = json!(p);
    }
    w.json("bilinear.json", &json!({ "free": free, "perturbed": perturbed }))
}

fn strichartz(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let est: EstimatesBlock = cfg.estimates.clone().unwrap_or_default();
    let xs = ctx.grid().nodes();
    let f = SpectralField::new(xs.iter().map(|x| C64::new((-x * x / 2.0).exp(), 0.0)).collect());
    let free_ctx = if ctx.potential().is_zero() {
        None
    } else {
        Some(context_with(cfg, PotentialKind::Zero)?)
    };
    let free = dispersive_decay(
        free_ctx.as_ref().unwrap_or(&ctx),
        &f,
        Generator::Free,
        false,
        f64::INFINITY,
        est.decay_window,
        est.decay_points,
    )?;
    c.within("decay_free_slope", None, free.slope, -0.5);
    w.dat("decay_free.dat", ("t", "sup_norm"), &free.times, &free.norms)?;
    let mut fits = vec![json!({ "generator": "free", "fit": free })];
    if !ctx.potential().is_zero() {
        let p = dispersive_decay(&ctx, &f, Generator::Perturbed, true, f64::INFINITY, est.decay_window, est.decay_points)?;
        c.within("decay_perturbed_slope", None, p.slope, -0.5);
        w.dat("decay_perturbed.dat", ("t", "sup_norm"), &p.times, &p.norms)?;
        fits.push(json!({ "generator": "perturbed", "fit": p }));
    }
    let mut rows = Vec::new();
    for s in 0..est.samples as u64 {
        let u = SpectralField::new(random_field(&ctx, est.seed, s, est.width));
        for &(q, r) in &est.pairs {
            rows.push(vec![s as f64, q, r, strichartz_ratio(&ctx, &u, q, r, est.horizon)?]);
        }
    }
    for &(q, r) in &est.pairs {
        let worst = rows.iter().filter(|x| x[1] == q && x[2] == r).map(|x| x[3]).fold(0.0, f64::max);
        c.record("strichartz_max_ratio", label(format!("q={q},r={r}")), worst);
    }
    w.csv("strichartz.csv", &["sample", "q", "r", "ratio"], &rows)?;
    w.json("decay.json", &json!({ "fits": fits }))
}

fn local_smoothing(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let ctx = context(cfg)?;
    let est: EstimatesBlock = cfg.estimates.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for s in 0..est.samples as u64 {
        let u = SpectralField::new(random_field(&ctx, est.seed, s, est.width));
        rows.push(vec![s as f64, local_smoothing_ratio(&ctx, &u, &Forcing::Zero, est.horizon, est.sigma)?]);
    }
    let worst = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    c.record("local_smoothing_max_ratio", None, worst);
    w.csv("local_smoothing.csv", &["sample", "ratio"], &rows)
}

/// q-variation of a scalar path started from zero, by enumerating every
/// subset of the samples.
fn brute_force_variation(values: &[f64], q: f64) -> f64 {
    let n = values.len();
    let mut best = 0.0f64;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut s = values[idx[0]].abs().powf(q);
        for p in idx.windows(2) {
            s += (values[p[1]] - values[p[0]]).abs().powf(q);
        }
        best = best.max(s);
    }
    best.powf(1.0 / q)
}

fn norms(cfg: &RunConfig, w: &mut ArtifactWriter, c: &mut Checks) -> Result<()> {
    let nb: NormsBlock = cfg.norms.clone().unwrap_or_default();
    if nb.max_len < 2 || nb.q_list.is_empty() {
        return Err(LabError::Config("norms: need max_len >= 2 and a nonempty q_list".into()));
    }
    let mut qs = nb.q_list.clone();
    qs.sort_by(f64::total_cmp);
    let mut rng = stream_rng(nb.seed, 0);
    let (mut monotone, mut embedded, mut exact) = (true, true, true);
    let mut rows = Vec::new();
    for p in 0..nb.paths {
        let len = rng.gen_range(2..=nb.max_len);
        let values: Vec<f64> = (0..len).map(|_| complex_gaussian(&mut rng, 2.0).re).collect();
        let path = DiscretePath::scalar(&values)?.with_zero_prefix(true);
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vs = qs.iter().map(|&q| q_variation(&path, q)).collect::<Result<Vec<f64>>>()?;
        exact &= qs.iter().zip(&vs).all(|(&q, &v)| v == brute_force_variation(&values, q));
        monotone &= vs.windows(2).all(|x| x[1] <= x[0] * (1.0 + 1e-12));
        embedded &= vs.iter().all(|v| sup <= v * (1.0 + 1e-12));
        for (q, v) in qs.iter().zip(&vs) {
            rows.push(vec![p as f64, len as f64, *q, *v]);
        }
    }
    c.holds("q_variation_dp_exact", None, exact);
    c.holds("q_variation_monotone", None, monotone);
    c.holds("linf_embedding", None, embedded);
    w.csv("q_variation.csv", &["path", "length", "q", "value"], &rows)?;

    // the pullback of a linear flow is constant, so only the jump from zero remains
    let ctx = context(cfg)?;
    let h = ctx.spacing();
    let u0 = SpectralField::new(random_field(&ctx, nb.seed, 1, 3.0));
    let n = nb.flow_samples.max(2);
    let times: Vec<f64> = (0..n).map(|k| nb.flow_horizon * k as f64 / (n - 1) as f64).collect();
    let vectors = times
        .iter()
        .map(|&t| Ok(ctx.propagate(&u0, t)?.into_values()))
        .collect::<Result<Vec<_>>>()?;
    let path = DiscretePath::new(times.clone(), vectors, h)?.with_zero_prefix(true);
    let adapted = adapted_norm(&ctx, &path, 2.0, PathGenerator::Perturbed, 0.0)?;
    let defect = (adapted - l2_norm(u0.values(), h)).abs() / l2_norm(u0.values(), h);
    c.record("linear_flow_adapted_defect", None, defect);
    let mut sizes = Vec::new();
    for q in &qs {
        sizes.push(json!({ "q": q, "adapted": adapted_norm(&ctx, &path, q.max(1.0), PathGenerator::Perturbed, 0.0)? }));
    }
    w.json("norms.json", &json!({ "paths": nb.paths, "monotone": monotone, "embedding": embedded, "linear_flow": sizes }))
}
