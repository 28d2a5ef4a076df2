//! On-disk shape store and annotation records.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use clickseg::geometry::io::{parse_cloud, parse_ply, write_atomic, write_labels, write_xyzn};
use clickseg::geometry::normalize_cloud;
use clickseg::{Click, Cloud, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeMeta {
    pub id: String,
    pub points: usize,
}

/// A committed part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub shape_id: String,
    pub label: String,
    /// Point indices of the final mask.
    pub indices: Vec<usize>,
    /// Clicks in the order they were placed.
    pub clicks: Vec<Click>,
    pub backend: String,
    /// Unix seconds.
    pub created: u64,
    pub committed: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parses an uploaded body as PLY (when it starts with `ply`) or `.xyzn`.
pub fn parse_upload(bytes: &[u8]) -> Result<Cloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse { line: 0, message: format!("not UTF-8: {e}") })?;
    if text.trim_start().starts_with("ply") {
        parse_ply(text)
    } else {
        parse_cloud(text)
    }
}

/// Content-addressed directory of normalized clouds plus annotation records.
#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: &Path) -> Result<Self> {
        for sub in ["shapes", "annotations"] {
            let d = root.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn shape_path(&self, id: &str) -> PathBuf {
        self.root.join("shapes").join(format!("{id}.xyzn"))
    }

    fn valid_id(id: &str) -> bool {
        !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
    }

    /// Stores the normalized cloud under the hash of the uploaded bytes.
    pub fn put_shape(&self, bytes: &[u8], cloud: &Cloud) -> Result<ShapeMeta> {
        let id = hex::encode(Sha256::digest(bytes))[..32].to_string();
        let path = self.shape_path(&id);
        if !path.exists() {
            let normalized = normalize_cloud(cloud)?;
            write_atomic(&path, write_xyzn(&normalized).as_bytes())?;
        }
        Ok(ShapeMeta { id, points: cloud.len() })
    }

    /// The stored cloud, exactly as every session sees it.
    pub fn get_shape(&self, id: &str) -> Result<Option<Cloud>> {
        if !Self::valid_id(id) {
            return Ok(None);
        }
        let path = self.shape_path(id);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(parse_cloud(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::Io { path, source: e }),
        }
    }

    fn annotation_dir(&self, shape_id: &str) -> PathBuf {
        self.root.join("annotations").join(shape_id)
    }

    pub fn put_record(&self, record: &AnnotationRecord) -> Result<()> {
        let path = self.annotation_dir(&record.shape_id).join(format!("{}.json", record.id));
        write_atomic(&path, serde_json::to_string_pretty(record)?.as_bytes())
    }

    /// Records of a shape in commit order.
    pub fn records(&self, shape_id: &str) -> Result<Vec<AnnotationRecord>> {
        if !Self::valid_id(shape_id) {
            return Ok(Vec::new());
        }
        let dir = self.annotation_dir(shape_id);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::Io { path: dir, source: e }),
        };
        let mut out = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::Io { path: dir.clone(), source: e })?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                out.push(serde_json::from_str::<AnnotationRecord>(&text)?);
            }
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }

    /// Sortable in commit order: nanosecond timestamp plus the committing session.
    pub fn next_record_id(session: &str) -> String {
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        format!("{nanos:024}-{session}")
    }

    /// `.labels` export: record `k` in commit order labels its points `k`
    /// (a later record wins on overlap); unlabeled points are `-1`.
    pub fn export_labels(&self, shape_id: &str, points: usize) -> Result<String> {
        let mut labels = vec![-1i64; points];
        for (k, r) in self.records(shape_id)?.iter().enumerate() {
            for &i in &r.indices {
                if i < points {
                    labels[i] = k as i64;
                }
            }
        }
        Ok(write_labels(&labels))
    }
}
