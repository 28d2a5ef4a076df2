//! On-disk collections of labeled shapes with a JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::io;
use crate::scalar::Real;
use crate::seed::derive_seed;

use super::compose::{reshuffle_compose, ComposeConfig};
use super::shape::LabeledShape;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// File stem relative to the dataset directory.
    pub file: String,
    pub k: usize,
    #[serde(default = "default_category")]
    pub category: String,
    /// SHA-256 over the `.xyzn` bytes followed by the `.labels` bytes.
    #[serde(default)]
    pub hash: String,
}

fn default_category() -> String {
    "synthetic".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: ComposeConfig,
    pub category: String,
    pub shapes: Vec<ManifestEntry>,
}

fn content_hash(xyzn: &[u8], labels: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(xyzn);
    h.update(labels);
    hex::encode(h.finalize())
}

fn file_hash(dir: &Path, stem: &str) -> Option<String> {
    let a = fs::read(dir.join(format!("{stem}.xyzn"))).ok()?;
    let b = fs::read(dir.join(format!("{stem}.labels"))).ok()?;
    Some(content_hash(&a, &b))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Outcome of [`generate_dataset`].
#[derive(Clone, Debug)]
pub struct GenerationSummary {
    pub manifest: Manifest,
    pub written: usize,
    pub skipped: usize,
}

/// Generates `count` shapes into `out_dir` (shape `i` uses seed `derive_seed(seed, i)`).
///
/// Files whose content already matches a previous manifest with the same seed and
/// config are left untouched.
pub fn generate_dataset(
    count: usize,
    config: &ComposeConfig,
    category: &str,
    out_dir: &Path,
    seed: u64,
) -> Result<GenerationSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let previous = read_manifest(out_dir)
        .ok()
        .filter(|m| m.seed == seed && &m.config == config && m.category == category);

    let results: Vec<Result<(ManifestEntry, bool)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let stem = format!("shape_{i:06}");
            if let Some(prev) = previous.as_ref().and_then(|m| m.shapes.get(i)) {
                if prev.file == stem && file_hash(out_dir, &stem).as_deref() == Some(prev.hash.as_str()) {
                    return Ok((prev.clone(), false));
                }
            }
            let shape: LabeledShape<f64> = reshuffle_compose(config, derive_seed(seed, i as u64))?;
            let xyzn = io::write_xyzn(shape.cloud());
            let labels = io::write_labels(&shape.labels_i64());
            let hash = content_hash(xyzn.as_bytes(), labels.as_bytes());
            let unchanged = file_hash(out_dir, &stem).as_deref() == Some(hash.as_str());
            if !unchanged {
                io::write_atomic(&out_dir.join(format!("{stem}.xyzn")), xyzn.as_bytes())?;
                io::write_atomic(&out_dir.join(format!("{stem}.labels")), labels.as_bytes())?;
            }
            let entry = ManifestEntry { file: stem, k: shape.segment_count(), category: category.to_string(), hash };
            Ok((entry, !unchanged))
        })
        .collect();

    let mut shapes = Vec::with_capacity(count);
    let mut written = 0;
    for r in results {
        let (entry, wrote) = r?;
        written += wrote as usize;
        shapes.push(entry);
    }
    let manifest = Manifest { seed, config: config.clone(), category: category.to_string(), shapes };
    let json = serde_json::to_string_pretty(&manifest)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let same = fs::read_to_string(&manifest_path).is_ok_and(|t| t == json);
    if !same {
        io::write_atomic(&manifest_path, json.as_bytes())?;
    }
    Ok(GenerationSummary { manifest, skipped: count - written, written })
}

/// A shape reference inside a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    pub category: String,
    pub stem: PathBuf,
}

impl DatasetItem {
    pub fn load<T: Real>(&self) -> Result<LabeledShape<T>> {
        LabeledShape::load(&self.stem)
    }
}

/// Lists the shapes of a dataset: manifest order when a manifest exists, otherwise
/// every `<stem>.xyzn` with a sibling `.labels` in sorted order (category "default").
pub fn list_dataset(dir: &Path) -> Result<Vec<DatasetItem>> {
    if dir.join(MANIFEST_FILE).exists() {
        let m = read_manifest(dir)?;
        return Ok(m
            .shapes
            .into_iter()
            .map(|e| DatasetItem { id: e.file.clone(), category: e.category, stem: dir.join(&e.file) })
            .collect());
    }
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "xyzn") && path.with_extension("labels").exists() {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            out.push(DatasetItem { id, category: "default".into(), stem: path.with_extension("") });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}
