//! Dataset manifests: CSV with a `path,label` header, labels `fado`/`other`.
//!
//! Relative paths are resolved against the manifest's own directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fadogate_core::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// The path exactly as written in the manifest; used as the item id.
    pub id: String,
    /// `id` resolved against the manifest directory.
    pub path: PathBuf,
    pub label: Label,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening manifest {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("reading {}", path.display()))?
        .clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["path", "label"] {
        bail!("{}:1: expected header `path,label`", path.display());
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            bail!("{}:{line}: empty path", path.display());
        }
        let label = match rec[1].trim() {
            "fado" => Label::Fado,
            "other" => Label::Other,
            t => bail!(
                "{}:{line}: label must be `fado` or `other`, found `{t}`",
                path.display()
            ),
        };
        rows.push(ManifestRow {
            path: base.join(&id),
            id,
            label,
        });
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[(String, Label)]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["path", "label"])?;
    for (p, label) in rows {
        w.write_record([p.as_str(), label.as_token()])?;
    }
    w.flush()?;
    Ok(())
}
