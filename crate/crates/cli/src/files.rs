//! Model and report files, and atomic output.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use beltlab::construct::{PlugSpec, Region};
use beltlab::dynamics::Section;
use beltlab::{Chart, Construction, ConstructionModel};
use serde::{Deserialize, Serialize};

pub const MODEL_FORMAT: &str = "beltlab-model";
pub const REPORT_FORMAT: &str = "beltlab-report";
pub const FORMAT_VERSION: u32 = 1;

/// Declarative facts about a model. Informational only: loading always
/// rebuilds them from the construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub plug: Option<PlugSpec>,
    #[serde(default)]
    pub section: Option<Section>,
    #[serde(default)]
    pub hamiltonian: bool,
    #[serde(default)]
    pub has_nu: bool,
    #[serde(default)]
    pub has_mu: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub construction: Construction,
    pub dimension: usize,
    pub chart: Chart,
    #[serde(default)]
    pub annotations: Annotations,
    /// SHA-256 of the canonical construction parameters.
    pub hash: String,
}

impl ModelFile {
    pub fn of(model: &ConstructionModel, note: Option<String>) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: FORMAT_VERSION,
            name: model.name().into(),
            construction: model.construction.clone(),
            dimension: model.dim(),
            chart: (*model.chart).clone(),
            annotations: Annotations {
                note,
                regions: model.regions.clone(),
                plug: model.plug.clone(),
                section: model.section.map(|(coord, value)| Section { coord, value }),
                hamiltonian: model.hamiltonian.is_some(),
                has_nu: model.nu.is_some(),
                has_mu: model.mu.is_some(),
            },
            hash: model.hash(),
        }
    }
}

/// Reads a model file, rebuilds the model from its parameters and checks
/// the stored hash and chart against the rebuild.
pub fn load_model(path: &Path) -> Result<(ModelFile, ConstructionModel)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile = serde_json::from_str(&text).with_context(|| format!("parsing model file {}", path.display()))?;
    if file.format != MODEL_FORMAT {
        bail!("{}: not a model file (format `{}`)", path.display(), file.format);
    }
    if file.version != FORMAT_VERSION {
        bail!("{}: unsupported model format version {}", path.display(), file.version);
    }
    let hash = file.construction.hash();
    if hash != file.hash {
        bail!("{}: hash mismatch (stored {}, parameters give {hash})", path.display(), file.hash);
    }
    let model = file
        .construction
        .build()
        .with_context(|| format!("rebuilding {}", path.display()))?;
    if *model.chart != file.chart {
        bail!("{}: stored chart does not match the rebuilt model", path.display());
    }
    Ok((file, model))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelRef {
    pub name: String,
    pub hash: String,
}

/// How the sample points of a report were drawn. Every report carries it, even when the
/// experiment is deterministic and draws no samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Seeds {
    pub scheme: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub format: String,
    pub version: u32,
    pub tool: Tool,
    pub command: String,
    pub model: Option<ModelRef>,
    pub seeds: Seeds,
    pub parameters: serde_json::Value,
    pub result: T,
}

impl<T: Serialize> ReportFile<T> {
    pub fn new(command: &str, model: Option<&ModelFile>, seeds: Seeds, parameters: serde_json::Value, result: T) -> Self {
        ReportFile {
            format: REPORT_FORMAT.into(),
            version: FORMAT_VERSION,
            tool: Tool {
                name: "beltlab".into(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
            command: command.into(),
            model: model.map(|m| ModelRef {
                name: m.name.clone(),
                hash: m.hash.clone(),
            }),
            seeds,
            parameters,
            result,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Writes a JSON report to `path`, or to stderr when there is none (stdout
/// is reserved for the primary output).
pub fn emit_report<T: Serialize>(path: Option<&Path>, report: &T) -> Result<()> {
    let text = to_json(report)?;
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip() {
        let m = Construction::suspension(vec![2f64.sqrt() - 1.0, 0.25]).build().unwrap();
        let f = ModelFile::of(&m, Some("x".into()));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        write_atomic(&p, to_json(&f).unwrap().as_bytes()).unwrap();
        let (g, m2) = load_model(&p).unwrap();
        assert_eq!(f, g);
        assert_eq!(m2.hash(), m.hash());
    }

    #[test]
    fn tampered_parameters_are_rejected() {
        let m = Construction::suspension(vec![0.5, 0.25]).build().unwrap();
        let text = to_json(&ModelFile::of(&m, None)).unwrap().replace("0.25", "0.26");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, text).unwrap();
        let err = load_model(&p).unwrap_err().to_string();
        assert!(err.contains("hash mismatch"), "{err}");
    }
}
