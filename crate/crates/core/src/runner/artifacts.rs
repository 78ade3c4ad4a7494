use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

/// Sidecar of a raw array file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySidecar {
    /// Binary file name, relative to the sidecar.
    pub file: String,
    /// `"float64"` or `"complex128"` (real then imaginary part).
    pub dtype: String,
    /// Always `"little"`.
    pub byte_order: String,
    /// Always `"row-major"`.
    pub order: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Shortest round-trip decimal; at most 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes artifacts into one run directory and keeps their checksums.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        if name.contains('/') || name.contains('\\') || name == "manifest.json" {
            return Err(LabError::InvalidArgument(format!("bad artifact name {name:?}")));
        }
        let path = self.dir.join(name);
        write_atomic(&path, data)?;
        self.entries.retain(|e| e.file != name);
        self.entries.push(ArtifactEntry {
            file: name.to_string(),
            bytes: data.len() as u64,
            sha256: sha256_hex(data),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)
            .map_err(|e| LabError::InvalidArgument(format!("cannot serialize {name}: {e}")))?;
        s.push('\n');
        self.bytes(name, s.as_bytes())
    }

    /// CSV with a header row; every field is formatted by [`num`].
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            s.push_str(&r.iter().map(|v| num(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        self.bytes(name, s.as_bytes())
    }

    /// Two-column gnuplot data with a comment header.
    pub fn dat(&mut self, name: &str, labels: (&str, &str), x: &[f64], y: &[f64]) -> Result<()> {
        let mut s = format!("# {} {}\n", labels.0, labels.1);
        for (a, b) in x.iter().zip(y) {
            s.push_str(&format!("{} {}\n", num(*a), num(*b)));
        }
        self.bytes(name, s.as_bytes())
    }

    /// `<stem>.bin` plus `<stem>.json`.
    pub fn real_array(&mut self, stem: &str, shape: &[usize], data: &[f64]) -> Result<()> {
        check_shape(stem, shape, data.len())?;
        let raw: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.array(stem, "float64", shape, &raw)
    }

    pub fn complex_array(&mut self, stem: &str, shape: &[usize], data: &[C64]) -> Result<()> {
        check_shape(stem, shape, data.len())?;
        let raw: Vec<u8> = data
            .iter()
            .flat_map(|v| v.re.to_le_bytes().into_iter().chain(v.im.to_le_bytes()))
            .collect();
        self.array(stem, "complex128", shape, &raw)
    }

    fn array(&mut self, stem: &str, dtype: &str, shape: &[usize], raw: &[u8]) -> Result<()> {
        let file = format!("{stem}.bin");
        self.bytes(&file, raw)?;
        let side = ArraySidecar {
            file,
            dtype: dtype.into(),
            byte_order: "little".into(),
            order: "row-major".into(),
            shape: shape.to_vec(),
        };
        self.json(&format!("{stem}.json"), &side)
    }
}

fn check_shape(stem: &str, shape: &[usize], len: usize) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(LabError::InvalidArgument(format!(
            "array {stem}: shape {shape:?} holds {expected} values, got {len}"
        )));
    }
    Ok(())
}

/// Write to a temporary sibling, then rename.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".into(),
    });
    let mut f = fs::File::create(&tmp).map_err(|e| LabError::io(&tmp, e))?;
    f.write_all(data).map_err(|e| LabError::io(&tmp, e))?;
    f.sync_all().map_err(|e| LabError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))
}

/// Reads a raw array through its sidecar.
pub fn read_real_array(sidecar: &Path) -> Result<(ArraySidecar, Vec<f64>)> {
    let text = fs::read_to_string(sidecar).map_err(|e| LabError::io(sidecar, e))?;
    let side: ArraySidecar = serde_json::from_str(&text)
        .map_err(|e| LabError::Integrity(format!("{}: {e}", sidecar.display())))?;
    if side.dtype != "float64" {
        return Err(LabError::Integrity(format!("{}: dtype {} is not float64", sidecar.display(), side.dtype)));
    }
    let bin = sidecar.with_file_name(&side.file);
    let raw = fs::read(&bin).map_err(|e| LabError::io(&bin, e))?;
    let n: usize = side.shape.iter().product();
    if raw.len() != 8 * n {
        return Err(LabError::Integrity(format!("{}: {} bytes for {n} values", bin.display(), raw.len())));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect();
    Ok((side, data))
}
