//! Configuration, orchestration and persistence of experiment runs.
//!
//! A run reads one JSON document, executes one experiment, writes its
//! artifacts into an output directory and finishes with `manifest.json`.
//! Exit codes of the command line tool: 0 for a completed run (checks may
//! still fail; see the manifest), 2 for a configuration error, 3 for a
//! numerical failure, 4 for an I/O or integrity error.

mod artifacts;
mod experiments;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use artifacts::{num, read_real_array, sha256_hex, write_atomic, ArraySidecar, ArtifactEntry, ArtifactWriter};
pub use report::{report, ReportSummary};

use crate::error::{LabError, Result};
use crate::evolution::{BilinearConfig, EvolutionConfig};
use crate::modulation::{BumpRecipe, DecomposeOptions, RemainderForm};
use crate::randomization::{CoefficientLaw, NormFunctional};
use crate::scattering::SplitPairs;
use crate::spectral::PotentialKind;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "NLS_LAB_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Spectrum,
    Groundstate,
    PlaneWaves,
    RandomizeMc,
    Evolve,
    Stability,
    Bilinear,
    Strichartz,
    LocalSmoothing,
    Norms,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 10] = [
        Self::Spectrum,
        Self::Groundstate,
        Self::PlaneWaves,
        Self::RandomizeMc,
        Self::Evolve,
        Self::Stability,
        Self::Bilinear,
        Self::Strichartz,
        Self::LocalSmoothing,
        Self::Norms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Groundstate => "groundstate",
            Self::PlaneWaves => "plane-waves",
            Self::RandomizeMc => "randomize-mc",
            Self::Evolve => "evolve",
            Self::Stability => "stability",
            Self::Bilinear => "bilinear",
            Self::Strichartz => "strichartz",
            Self::LocalSmoothing => "local-smoothing",
            Self::Norms => "norms",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub half_length: f64,
    pub n_points: usize,
    #[serde(default = "one")]
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationBlock {
    #[serde(default = "CoefficientLaw::gaussian")]
    pub law: CoefficientLaw,
    #[serde(default = "milli")]
    pub epsilon: f64,
    #[serde(default = "zero_seed")]
    pub seeds: Vec<u64>,
    /// Monte-Carlo sample count.
    #[serde(default = "ten_thousand")]
    pub samples: usize,
    /// The datum `u0` before randomization.
    #[serde(default = "unit_bump")]
    pub datum: BumpRecipe,
    #[serde(default = "l4_norm")]
    pub norm: NormFunctional,
    /// Tail thresholds; by default `0.01 i ||u0||`, `i = 1..400`.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub split_pairs: SplitPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchBlock {
    #[serde(default = "z_min")]
    pub z_min: f64,
    #[serde(default = "z_max")]
    pub z_max: f64,
    #[serde(default = "eight")]
    pub samples: usize,
    /// Chebyshev nodes of the interpolant used by the modulation runs.
    #[serde(default = "twelve")]
    pub nodes: usize,
}

impl Default for BranchBlock {
    fn default() -> Self {
        Self {
            z_min: z_min(),
            z_max: z_max(),
            samples: eight(),
            nodes: twelve(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumBlock {
    /// Tabulate `||Delta~_K Delta_N||` over dyadic `K, N <= max_block`.
    #[serde(default)]
    pub cross_localization: bool,
    #[serde(default = "sixty_four")]
    pub max_block: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWavesBlock {
    #[serde(default = "hundred")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Envelope width of the random test fields.
    #[serde(default = "three")]
    pub width: f64,
    /// Gaussian low-pass `exp(-k^2 / (2 cutoff^2))` applied to the test fields.
    #[serde(default = "ten_f")]
    pub cutoff: f64,
    /// Momenta of the Lippmann-Schwinger plane waves written out.
    #[serde(default = "unit_list")]
    pub momenta: Vec<f64>,
    /// Momentum cutoff of the cross-route comparison.
    #[serde(default = "three")]
    pub xi_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveBlock {
    pub z: [f64; 2],
    #[serde(default)]
    pub perturbation: Option<BumpRecipe>,
    #[serde(default)]
    pub perturbation_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityBlock {
    pub z0: [f64; 2],
    pub perturbation: BumpRecipe,
    #[serde(default)]
    pub perturbation_seed: u64,
    #[serde(default = "ten")]
    pub diagnostic_stride: usize,
    #[serde(default)]
    pub remainder: RemainderForm,
    #[serde(default)]
    pub decompose: DecomposeOptions,
    #[serde(default = "sigma")]
    pub sigma: f64,
    #[serde(default = "tail")]
    pub tail_fraction: f64,
    /// Subtract the scattering series of the unperturbed soliton run.
    #[serde(default = "yes")]
    pub subtract_reference: bool,
    /// Repeat the first seed at `dt / 2` and compare the ODE residual constants.
    #[serde(default)]
    pub check_dt_halving: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesBlock {
    #[serde(default = "twenty")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "three")]
    pub width: f64,
    #[serde(default = "ten_f")]
    pub horizon: f64,
    /// Admissible `(q, r)` pairs.
    #[serde(default = "pairs")]
    pub pairs: Vec<(f64, f64)>,
    /// Dispersive decay window and sample count.
    #[serde(default = "window")]
    pub decay_window: (f64, f64),
    #[serde(default = "forty")]
    pub decay_points: usize,
    #[serde(default = "sigma")]
    pub sigma: f64,
}

impl Default for EstimatesBlock {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsBlock {
    #[serde(default = "five_hundred")]
    pub paths: usize,
    #[serde(default = "ten")]
    pub max_len: usize,
    #[serde(default = "q_list")]
    pub q_list: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Samples of the linear flow whose adapted norm is reported.
    #[serde(default = "forty")]
    pub flow_samples: usize,
    #[serde(default = "one_f")]
    pub flow_horizon: f64,
}

impl Default for NormsBlock {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// One experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub grid: GridBlock,
    #[serde(default = "zero_potential")]
    pub potential: PotentialKind,
    #[serde(default)]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub randomization: Option<RandomizationBlock>,
    #[serde(default)]
    pub branch: Option<BranchBlock>,
    /// Overrides of named check tolerances.
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub spectrum: Option<SpectrumBlock>,
    #[serde(default)]
    pub plane_waves: Option<PlaneWavesBlock>,
    #[serde(default)]
    pub evolve: Option<EvolveBlock>,
    #[serde(default)]
    pub stability: Option<StabilityBlock>,
    #[serde(default)]
    pub bilinear: Option<BilinearConfig>,
    #[serde(default)]
    pub estimates: Option<EstimatesBlock>,
    #[serde(default)]
    pub norms: Option<NormsBlock>,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn milli() -> f64 {
    1e-3
}
fn zero_seed() -> Vec<u64> {
    vec![0]
}
fn ten_thousand() -> usize {
    10_000
}
fn unit_bump() -> BumpRecipe {
    BumpRecipe {
        amplitude: 1.0,
        width: 1.0,
        carrier: 0.0,
        center: 0.0,
    }
}
fn l4_norm() -> NormFunctional {
    NormFunctional::Spacetime {
        q: 4.0,
        r: 4.0,
        horizon: 1.0,
    }
}
fn z_min() -> f64 {
    1e-3
}
fn z_max() -> f64 {
    0.1
}
fn eight() -> usize {
    8
}
fn ten() -> usize {
    10
}
fn ten_f() -> f64 {
    10.0
}
fn twelve() -> usize {
    12
}
fn twenty() -> usize {
    20
}
fn forty() -> usize {
    40
}
fn hundred() -> usize {
    100
}
fn five_hundred() -> usize {
    500
}
fn sixty_four() -> f64 {
    64.0
}
fn three() -> f64 {
    3.0
}
fn unit_list() -> Vec<f64> {
    vec![1.0]
}
fn sigma() -> f64 {
    -0.6
}
fn tail() -> f64 {
    0.8
}
fn yes() -> bool {
    true
}
fn pairs() -> Vec<(f64, f64)> {
    vec![(8.0, 4.0), (6.0, 6.0), (5.0, 10.0)]
}
fn window() -> (f64, f64) {
    (1.0, 50.0)
}
fn q_list() -> Vec<f64> {
    vec![1.5, 2.0, 3.0, 4.0]
}
fn zero_potential() -> PotentialKind {
    PotentialKind::Zero
}

impl RunConfig {
    /// Parses and validates one JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Ok((Self::from_json(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(LabError::Config(format!("{field}: {why}")));
        let g = &self.grid;
        if !(g.half_length.is_finite() && g.half_length > 0.0) {
            return bad("grid.half_length", format!("must be positive, got {}", g.half_length));
        }
        if g.n_points < 8 || !g.n_points.is_power_of_two() {
            return bad("grid.n_points", format!("{} is not a power of two >= 8", g.n_points));
        }
        if g.d == 0 {
            return bad("grid.d", "must be >= 1".into());
        }
        if let Some(e) = &self.evolution {
            if let Err(err) = e.validate() {
                return bad("evolution", err.to_string());
            }
        }
        if let Some(r) = &self.randomization {
            if r.seeds.is_empty() {
                return bad("randomization.seeds", "must not be empty".into());
            }
            if !(r.epsilon >= 0.0 && r.epsilon.is_finite()) {
                return bad("randomization.epsilon", format!("must be >= 0, got {}", r.epsilon));
            }
        }
        if let Some(b) = &self.branch {
            if !(b.z_min > 0.0 && b.z_max > b.z_min) || b.samples < 2 || b.nodes < 2 {
                return bad("branch", "needs 0 < z_min < z_max and at least two samples and nodes".into());
            }
        }
        if let Some(n) = &self.norms {
            if !(2..=20).contains(&n.max_len) {
                return bad("norms.max_len", format!("must lie in 2..=20, got {}", n.max_len));
            }
        }
        for (name, v) in &self.tolerances {
            if !known_tolerance(name) {
                return bad(&format!("tolerances.{name}"), "unknown check name".into());
            }
            if !v.is_finite() {
                return bad(&format!("tolerances.{name}"), "must be finite".into());
            }
        }
        let needs = |present: bool, block: &str| {
            if present {
                Ok(())
            } else {
                bad(block, format!("required by experiment {}", self.experiment.name()))
            }
        };
        match self.experiment {
            ExperimentId::Evolve => {
                needs(self.evolve.is_some(), "evolve")?;
                needs(self.evolution.is_some(), "evolution")?;
            }
            ExperimentId::Stability => {
                needs(self.stability.is_some(), "stability")?;
                needs(self.evolution.is_some(), "evolution")?;
            }
            ExperimentId::RandomizeMc => needs(self.randomization.is_some(), "randomization")?,
            _ => {}
        }
        Ok(())
    }

    /// Tolerance of a named check, after overrides.
    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances
            .get(name)
            .copied()
            .unwrap_or_else(|| default_tolerance(name).expect("check names are registered"))
    }
}

/// Named checks and their default tolerances.
pub const TOLERANCES: &[(&str, f64)] = &[
    ("orthonormality", 1e-10),
    ("hermitian_defect", 1e-10),
    ("e0_error", 1e-8),
    ("spectral_gap", 1e-3),
    ("cross_localization_decay", 0.1),
    ("cross_localization_floor", 1e-12),
    ("elliptic_residual", 1e-9),
    ("q_slope", 0.15),
    ("weighted_q_slope", 0.15),
    ("dq_slope", 0.15),
    ("e_slope", 0.15),
    ("de_slope", 0.15),
    ("plancherel", 1e-8),
    ("diagonalization", 1e-8),
    ("helmholtz_residual", 1e-6),
    ("route_agreement", 1e-4),
    ("tail_slope", 0.0),
    ("tail_r_squared", 0.9),
    ("single_cube_slope_ratio", 0.05),
    ("mass_drift", 1e-10),
    ("coherence_modulus", 1e-6),
    ("coherence_phase", 1e-5),
    ("ode_residual_ratio", 2.0),
    ("tail_variation", 1e-4),
    ("pp_final_over_max", 0.5),
    ("bilinear_free_slope", 0.1),
    ("decay_free_slope", 0.05),
    ("decay_perturbed_slope", 0.15),
];

fn default_tolerance(name: &str) -> Option<f64> {
    TOLERANCES.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
}

fn known_tolerance(name: &str) -> bool {
    default_tolerance(name).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `measured <= tolerance`.
    AtMost,
    /// `measured >= tolerance`.
    AtLeast,
    /// `|measured - target| <= tolerance`.
    Within,
    /// Boolean property; `measured` is 1 or 0.
    Holds,
    /// Reported only.
    Recorded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Distinguishes repeated checks, e.g. one per seed.
    pub label: Option<String>,
    pub relation: Relation,
    #[serde(with = "nan_as_null")]
    pub measured: f64,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

/// Check list of one run.
#[derive(Debug, Default)]
pub struct Checks<'a> {
    cfg: Option<&'a RunConfig>,
    pub list: Vec<Check>,
}

impl<'a> Checks<'a> {
    pub fn new(cfg: &'a RunConfig) -> Self {
        Self {
            cfg: Some(cfg),
            list: Vec::new(),
        }
    }

    fn tol(&self, name: &str) -> f64 {
        match self.cfg {
            Some(c) => c.tolerance(name),
            None => default_tolerance(name).expect("check names are registered"),
        }
    }

    fn push(&mut self, name: &str, label: Option<String>, relation: Relation, measured: f64, target: Option<f64>, tolerance: Option<f64>, pass: bool) {
        self.list.push(Check {
            name: name.into(),
            label,
            relation,
            measured,
            target,
            tolerance,
            pass,
        });
    }

    pub fn at_most(&mut self, name: &str, label: Option<String>, measured: f64) -> bool {
        let t = self.tol(name);
        let pass = measured <= t;
        self.push(name, label, Relation::AtMost, measured, None, Some(t), pass);
        pass
    }

    pub fn at_least(&mut self, name: &str, label: Option<String>, measured: f64) -> bool {
        let t = self.tol(name);
        let pass = measured >= t;
        self.push(name, label, Relation::AtLeast, measured, None, Some(t), pass);
        pass
    }

    pub fn within(&mut self, name: &str, label: Option<String>, measured: f64, target: f64) -> bool {
        let t = self.tol(name);
        let pass = (measured - target).abs() <= t;
        self.push(name, label, Relation::Within, measured, Some(target), Some(t), pass);
        pass
    }

    pub fn holds(&mut self, name: &str, label: Option<String>, ok: bool) -> bool {
        self.push(name, label, Relation::Holds, if ok { 1.0 } else { 0.0 }, None, None, ok);
        ok
    }

    pub fn record(&mut self, name: &str, label: Option<String>, measured: f64) {
        self.push(name, label, Relation::Recorded, measured, None, None, measured.is_finite());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: ExperimentId,
    /// The resolved configuration, defaults filled in.
    pub config: RunConfig,
    /// The configuration document as read.
    pub config_source: String,
    pub seed_override: Option<u64>,
    pub code_version: String,
    pub wall_time_seconds: f64,
    /// `"completed"` or `"failed"`.
    pub status: String,
    pub failure: Option<Failure>,
    pub checks: Vec<Check>,
    pub all_checks_pass: bool,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::Integrity(format!("corrupt manifest {}: {e}", path.display())))
    }

    /// Recomputes every artifact checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let path = dir.join(&a.file);
            let data = std::fs::read(&path).map_err(|e| LabError::io(&path, e))?;
            if sha256_hex(&data) != a.sha256 {
                return Err(LabError::Integrity(format!("checksum mismatch for {}", path.display())));
            }
        }
        Ok(())
    }
}

/// Non-finite values are written as `null` and read back as `NaN`.
pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Exit code of the command line tool for an error.
pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::Config(_) => 2,
        LabError::Io { .. } | LabError::Integrity(_) => 4,
        _ => 3,
    }
}

/// Output directory: explicit argument, then the environment override,
/// then the config, then `runs/<experiment>`.
pub fn resolve_output(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV) {
        return PathBuf::from(p);
    }
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.experiment.name()))
}

/// Executes `cfg` into `out` and writes the manifest. A numerical failure
/// still produces a manifest; the error is returned after it is written.
pub fn run(cfg: &RunConfig, source: &str, seed: Option<u64>, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(s) = seed {
        apply_seed(&mut cfg, s);
    }
    let start = Instant::now();
    let mut writer = ArtifactWriter::create(out)?;
    let mut checks = Checks::new(&cfg);
    let outcome = experiments::execute(&cfg, &mut writer, &mut checks);
    let list = std::mem::take(&mut checks.list);
    let failure = match &outcome {
        Ok(()) => None,
        Err(e) => {
            if matches!(e, LabError::Io { .. }) {
                return Err(outcome.unwrap_err());
            }
            Some(Failure {
                kind: format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or("").to_string(),
                message: e.to_string(),
            })
        }
    };
    let manifest = RunManifest {
        experiment: cfg.experiment,
        config: cfg.clone(),
        config_source: source.to_string(),
        seed_override: seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        status: if failure.is_none() { "completed" } else { "failed" }.into(),
        failure,
        all_checks_pass: outcome.is_ok() && list.iter().all(|c| c.pass),
        checks: list,
        artifacts: writer.entries().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| LabError::InvalidArgument(format!("cannot serialize manifest: {e}")))?;
    text.push('\n');
    write_atomic(&out.join("manifest.json"), text.as_bytes())?;
    outcome.map(|_| manifest)
}

fn apply_seed(cfg: &mut RunConfig, seed: u64) {
    if let Some(r) = cfg.randomization.as_mut() {
        r.seeds = vec![seed];
    }
    if let Some(p) = cfg.plane_waves.as_mut() {
        p.seed = seed;
    }
    if let Some(b) = cfg.bilinear.as_mut() {
        b.seed = seed;
    }
    if let Some(e) = cfg.estimates.as_mut() {
        e.seed = seed;
    }
    if let Some(n) = cfg.norms.as_mut() {
        n.seed = seed;
    }
    if let Some(s) = cfg.stability.as_mut() {
        s.perturbation_seed = seed;
    }
    if let Some(e) = cfg.evolve.as_mut() {
        e.perturbation_seed = seed;
    }
}
