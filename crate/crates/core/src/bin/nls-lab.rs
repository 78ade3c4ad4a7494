use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nls_lab::runner::{exit_code, report, resolve_output, run, ExperimentId, RunConfig, RunManifest};
use nls_lab::{LabError, Result};

#[derive(Parser)]
#[command(name = "nls-lab", version, about = "Experiments on small NLS ground states with a potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Replaces every seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides NLS_LAB_OUT and the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    Spectrum(RunArgs),
    Groundstate(RunArgs),
    PlaneWaves(RunArgs),
    RandomizeMc(RunArgs),
    Evolve(RunArgs),
    Stability(RunArgs),
    Bilinear(RunArgs),
    Strichartz(RunArgs),
    LocalSmoothing(RunArgs),
    Norms(RunArgs),
    /// Merge the manifests of finished runs.
    Report {
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn execute(id: ExperimentId, args: &RunArgs) -> Result<RunManifest> {
    let (cfg, source) = RunConfig::from_path(&args.config)?;
    if cfg.experiment != id {
        return Err(LabError::Config(format!(
            "experiment: config is for {}, subcommand is {}",
            cfg.experiment.name(),
            id.name()
        )));
    }
    let out = resolve_output(&cfg, args.out.as_deref());
    let manifest = run(&cfg, &source, args.seed, &out)?;
    for c in &manifest.checks {
        println!(
            "{} {}{} measured={:e}{}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.label.as_ref().map(|l| format!(" [{l}]")).unwrap_or_default(),
            c.measured,
            c.tolerance.map(|t| format!(" tolerance={t:e}")).unwrap_or_default()
        );
    }
    println!("wrote {} artifacts to {}", manifest.artifacts.len(), out.display());
    Ok(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (id, args) = match &cli.command {
        Command::Spectrum(a) => (ExperimentId::Spectrum, a),
        Command::Groundstate(a) => (ExperimentId::Groundstate, a),
        Command::PlaneWaves(a) => (ExperimentId::PlaneWaves, a),
        Command::RandomizeMc(a) => (ExperimentId::RandomizeMc, a),
        Command::Evolve(a) => (ExperimentId::Evolve, a),
        Command::Stability(a) => (ExperimentId::Stability, a),
        Command::Bilinear(a) => (ExperimentId::Bilinear, a),
        Command::Strichartz(a) => (ExperimentId::Strichartz, a),
        Command::LocalSmoothing(a) => (ExperimentId::LocalSmoothing, a),
        Command::Norms(a) => (ExperimentId::Norms, a),
        Command::Report { dirs, out } => {
            return match report(dirs, out) {
                Ok(s) => {
                    println!("{} runs, {} checks, {} failing", s.runs.len(), s.checks.len(), s.checks.iter().filter(|c| !c.pass).count());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e) as u8)
                }
            };
        }
    };
    match execute(id, args) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
