use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{num, write_atomic, ExperimentId, Relation, RunManifest};
use crate::error::{LabError, Result};
use crate::groundstate::loglog_slope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run: String,
    pub experiment: ExperimentId,
    pub status: String,
    pub all_checks_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCheck {
    pub run: String,
    pub experiment: ExperimentId,
    pub name: String,
    pub label: Option<String>,
    pub relation: Relation,
    #[serde(with = "super::nan_as_null")]
    pub measured: f64,
    pub tolerance: Option<f64>,
    pub pass: bool,
}

/// Asymptotic parameter of one stability seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZPlusRow {
    pub run: String,
    pub seed: u64,
    pub z_plus: Option<[f64; 2]>,
    pub tail_variation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: Vec<RunRow>,
    pub checks: Vec<ReportCheck>,
    pub z_plus: Vec<ZPlusRow>,
    /// `(N, slope)` of the pooled free bilinear tables.
    pub bilinear_slopes: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct StabilitySeed {
    seed: u64,
    summary: crate::modulation::ModulationSummary,
}

#[derive(Deserialize)]
struct StabilityFile {
    seeds: Vec<StabilitySeed>,
}

#[derive(Deserialize)]
struct BilinearFile {
    free: crate::evolution::BilinearTable,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Integrity(format!("corrupt {}: {e}", path.display())))
}

/// Merges the manifests of completed runs into `out/report.csv` and
/// `out/report.json`, plus `out/z_plus.csv` when stability runs are present.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<ReportSummary> {
    let mut summary = ReportSummary::default();
    let mut pooled: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for dir in dirs {
        let manifest = RunManifest::read(dir)?;
        manifest.verify(dir)?;
        let run = dir.display().to_string();
        summary.runs.push(RunRow {
            run: run.clone(),
            experiment: manifest.experiment,
            status: manifest.status.clone(),
            all_checks_pass: manifest.all_checks_pass,
        });
        for c in &manifest.checks {
            summary.checks.push(ReportCheck {
                run: run.clone(),
                experiment: manifest.experiment,
                name: c.name.clone(),
                label: c.label.clone(),
                relation: c.relation,
                measured: c.measured,
                tolerance: c.tolerance,
                pass: c.pass,
            });
        }
        let has = |f: &str| manifest.artifacts.iter().any(|a| a.file == f);
        if manifest.experiment == ExperimentId::Stability && has("summary.json") {
            let file: StabilityFile = read_json(&dir.join("summary.json"))?;
            let tol = manifest.config.tolerance("tail_variation");
            for s in file.seeds {
                summary.z_plus.push(ZPlusRow {
                    run: run.clone(),
                    seed: s.seed,
                    z_plus: s.summary.z_plus,
                    tail_variation: s.summary.tail_variation,
                    converged: s.summary.truncated.is_none() && s.summary.tail_variation <= tol,
                });
            }
        }
        if manifest.experiment == ExperimentId::Bilinear && has("bilinear.json") {
            let file: BilinearFile = read_json(&dir.join("bilinear.json"))?;
            for r in file.free.rows.iter().filter(|r| r.m > r.n) {
                pooled.entry(r.n.to_bits()).or_default().push((r.m, r.mean_norm));
            }
        }
    }
    for (n, pts) in pooled {
        if pts.len() >= 2 {
            let (m, v): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            summary.bilinear_slopes.push((f64::from_bits(n), loglog_slope(&m, &v)?));
        }
    }

    std::fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    let mut csv = String::from("run,experiment,check,label,relation,measured,tolerance,pass\n");
    for c in &summary.checks {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            quote(&c.run),
            c.experiment.name(),
            c.name,
            quote(c.label.as_deref().unwrap_or("")),
            serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            num(c.measured),
            c.tolerance.map(num).unwrap_or_default(),
            c.pass
        ));
    }
    write_atomic(&out.join("report.csv"), csv.as_bytes())?;
    if !summary.z_plus.is_empty() {
        let mut z = String::from("run,seed,re_z_plus,im_z_plus,tail_variation,converged\n");
        for r in &summary.z_plus {
            let (re, im) = r.z_plus.map_or((f64::NAN, f64::NAN), |v| (v[0], v[1]));
            z.push_str(&format!(
                "{},{},{},{},{},{}\n",
                quote(&r.run),
                r.seed,
                num(re),
                num(im),
                num(r.tail_variation),
                r.converged
            ));
        }
        write_atomic(&out.join("z_plus.csv"), z.as_bytes())?;
    }
    let mut text = serde_json::to_string_pretty(&summary)
        .map_err(|e| LabError::InvalidArgument(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    write_atomic(&out.join("report.json"), text.as_bytes())?;
    Ok(summary)
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
