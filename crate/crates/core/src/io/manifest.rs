//! Ratings manifest: a JSON array of rated reference/distorted pairs.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub dataset_id: String,
    pub video_id: String,
    pub ref_path: PathBuf,
    pub dist_path: PathBuf,
    pub dmos: f64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
    /// Directory that relative frame paths are resolved against.
    base: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<ManifestRecord>, base: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (row, r) in records.iter().enumerate() {
            if r.dataset_id.is_empty() || r.video_id.is_empty() {
                return Err(Error::invalid(format!("manifest row {row}: empty dataset_id or video_id")));
            }
            if !r.dmos.is_finite() {
                return Err(Error::invalid(format!(
                    "manifest row {row} ({}/{}): dmos is not finite",
                    r.dataset_id, r.video_id
                )));
            }
            if !seen.insert((&r.dataset_id, &r.video_id)) {
                return Err(Error::invalid(format!(
                    "manifest row {row}: duplicate key {}/{}",
                    r.dataset_id, r.video_id
                )));
            }
        }
        Ok(Self {
            records,
            base: base.into(),
        })
    }

    pub fn from_json(text: &str, base: impl Into<PathBuf>) -> Result<Self> {
        Self::new(serde_json::from_str(text)?, base)
    }

    /// Loads a manifest; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&fs::read_to_string(path)?, base)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.records)?)
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    /// Checks that every referenced frame directory exists.
    pub fn check_paths(&self) -> Result<()> {
        for (row, r) in self.records.iter().enumerate() {
            for p in [&r.ref_path, &r.dist_path] {
                let full = self.resolve(p);
                if !full.is_dir() {
                    return Err(Error::invalid(format!(
                        "manifest row {row} ({}/{}): {} is not a directory",
                        r.dataset_id,
                        r.video_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"[
        {"dataset_id": "a", "video_id": "v1", "ref_path": "r", "dist_path": "d1", "dmos": 90.5, "split": "train"},
        {"dataset_id": "a", "video_id": "v2", "ref_path": "r", "dist_path": "d2", "dmos": 70, "split": "test"}
    ]"#;

    #[test]
    fn parses_and_round_trips() {
        let m = DatasetManifest::from_json(TWO, "/data").unwrap();
        assert_eq!(m.records().len(), 2);
        assert_eq!(m.split(Split::Test).count(), 1);
        assert_eq!(m.resolve(Path::new("d1")), PathBuf::from("/data/d1"));
        let again = DatasetManifest::from_json(&m.to_json().unwrap(), "/data").unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_duplicates_and_bad_rows() {
        let dup = TWO.replace("\"v2\"", "\"v1\"");
        let err = DatasetManifest::from_json(&dup, "").unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
        assert!(DatasetManifest::from_json(&TWO.replace("\"test\"", "\"dev\""), "").is_err());
        assert!(DatasetManifest::from_json(&TWO.replace("\"dmos\": 70", "\"dmos\": 70, \"x\": 1"), "").is_err());
    }

    #[test]
    fn missing_directories_are_reported() {
        let m = DatasetManifest::from_json(TWO, "/nonexistent").unwrap();
        let err = m.check_paths().unwrap_err().to_string();
        assert!(err.contains("row 0"), "{err}");
    }
}
