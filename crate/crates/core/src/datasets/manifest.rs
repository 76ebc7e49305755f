use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compose::Source;
use crate::error::{Error, Result};
use crate::image::BBox;

use super::config::PipelineConfig;
use super::pipeline::{build_composed, build_mixed, ingest, Dataset, SymbolRecord};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRANSCRIPTION_FILE: &str = "transcriptions.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub image: String,
    pub transcription: Vec<String>,
    pub boxes: Vec<BBox>,
    pub sources: Vec<Source>,
    /// Pool ids of the symbols, see `DatasetManifest::symbols`.
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// The command that produced a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetOrigin {
    /// The full pipeline under the config's mix policy.
    Mix,
    /// Crops from `input` used as they are, all tagged `source`.
    Compose { input: PathBuf, source: Source },
}

/// How a dataset was built, which files it consists of, and their
/// checksums. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: u32,
    pub origin: DatasetOrigin,
    pub config: PipelineConfig,
    pub short_classes: Vec<String>,
    pub lines: Vec<LineRecord>,
    /// Pool entries referenced by at least one line.
    pub symbols: Vec<SymbolRecord>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes line PNGs, the transcription file and the manifest into `dir`.
/// The manifest is assembled in memory and written last.
pub fn write_dataset(
    dir: &Path,
    origin: &DatasetOrigin,
    ds: &Dataset,
    cfg: &PipelineConfig,
) -> Result<DatasetManifest> {
    let mut files = Vec::new();
    let mut lines = Vec::new();
    let mut used = std::collections::BTreeMap::new();
    let mut transcriptions = String::new();
    for (i, line) in ds.lines.iter().enumerate() {
        let rel = format!("lines/line_{i:05}.png");
        let bytes = line.image.to_png_bytes();
        write(&dir.join(&rel), &bytes)?;
        files.push(FileEntry {
            path: rel.clone(),
            sha256: sha256_hex(&bytes),
        });
        let mut ids = Vec::new();
        for ((label, &source), &index) in line
            .transcription
            .iter()
            .zip(&line.sources)
            .zip(&line.instances)
        {
            let rec = ds.pools.record(label, source, index).ok_or_else(|| {
                Error::InsufficientData(format!("no provenance for {source}/{label}/{index}"))
            })?;
            used.insert(rec.id.clone(), rec.clone());
            ids.push(rec.id.clone());
        }
        transcriptions.push_str(&line.transcription.join(" "));
        transcriptions.push('\n');
        lines.push(LineRecord {
            image: rel,
            transcription: line.transcription.clone(),
            boxes: line.boxes.clone(),
            sources: line.sources.clone(),
            symbols: ids,
        });
    }
    write(&dir.join(TRANSCRIPTION_FILE), transcriptions.as_bytes())?;
    files.push(FileEntry {
        path: TRANSCRIPTION_FILE.into(),
        sha256: sha256_hex(transcriptions.as_bytes()),
    });
    let manifest = DatasetManifest {
        format: FORMAT_VERSION,
        origin: origin.clone(),
        config: cfg.clone(),
        short_classes: ds.scenario.short_classes.clone(),
        lines,
        symbols: used.into_values().collect(),
        files,
    };
    save_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn save_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write(&dir.join(MANIFEST_FILE), text.as_bytes())
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let format = value.get("format").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if format != FORMAT_VERSION {
        return Err(Error::FormatVersion(format));
    }
    Ok(serde_json::from_value(value)?)
}

/// Checks that every listed file exists with its recorded checksum and that
/// every line image is listed.
pub fn verify_dataset(dir: &Path) -> Result<DatasetManifest> {
    let m = load_manifest(dir)?;
    for f in &m.files {
        let path = dir.join(&f.path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::Checksum(path));
        }
    }
    for l in &m.lines {
        if !m.files.iter().any(|f| f.path == l.image) {
            return Err(Error::Checksum(dir.join(&l.image)));
        }
    }
    Ok(m)
}

/// Rebuilds the dataset a manifest describes from its config snapshot.
pub fn rebuild(m: &DatasetManifest) -> Result<Dataset> {
    match &m.origin {
        DatasetOrigin::Mix => build_mixed(&m.config),
        DatasetOrigin::Compose { input, source } => {
            let p = &m.config.generation.parser;
            build_composed(
                &ingest(input, p.threshold, p.canvas, p.margin)?,
                *source,
                &m.config,
            )
        }
    }
}

/// Rebuilds the dataset in `dir` into `out` and checks that every file
/// matches the original checksums.
pub fn regenerate(dir: &Path, out: &Path) -> Result<DatasetManifest> {
    let original = verify_dataset(dir)?;
    let ds = rebuild(&original)?;
    let fresh = write_dataset(out, &original.origin, &ds, &original.config)?;
    if let Some(f) = fresh
        .files
        .iter()
        .zip(&original.files)
        .find(|(a, b)| a != b)
        .map(|(a, _)| a)
    {
        return Err(Error::Checksum(out.join(&f.path)));
    }
    if fresh.files.len() != original.files.len() || fresh != original {
        return Err(Error::Checksum(out.join(MANIFEST_FILE)));
    }
    Ok(fresh)
}
