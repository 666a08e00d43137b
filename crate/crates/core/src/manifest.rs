//! JSON dataset manifest listing per-patient inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest is invalid:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub volume_path: PathBuf,
    pub ground_truth_boxes_path: PathBuf,
    /// Detector output on the fully sampled volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reconstruction_paths: BTreeMap<String, PathBuf>,
    /// Detector output on each reconstruction, keyed like `reconstruction_paths`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reconstruction_predictions_paths: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Model names that appear in any entry's reconstructions.
    pub fn models(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .flat_map(|e| e.reconstruction_paths.keys().cloned())
            .collect()
    }

    /// Unique patient ids and every referenced file present.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut problems = self.duplicate_ids();
        for e in &self.entries {
            let mut paths = vec![&e.volume_path, &e.ground_truth_boxes_path];
            paths.extend(e.predictions_path.iter());
            paths.extend(e.reconstruction_paths.values());
            paths.extend(e.reconstruction_predictions_paths.values());
            for p in paths {
                self.check_file(&e.patient_id, p, &mut problems);
            }
        }
        finish(problems)
    }

    /// Checks what evaluating one model needs. `None` means the fully sampled
    /// reference itself (predictions on the original volumes).
    pub fn validate_for_model(&self, model: Option<&str>) -> Result<(), ManifestError> {
        let mut problems = self.duplicate_ids();
        if self.entries.is_empty() {
            problems.push("manifest has no entries".into());
        }
        for e in &self.entries {
            self.check_file(&e.patient_id, &e.volume_path, &mut problems);
            self.check_file(&e.patient_id, &e.ground_truth_boxes_path, &mut problems);
            match model {
                None => match &e.predictions_path {
                    Some(p) => self.check_file(&e.patient_id, p, &mut problems),
                    None => problems.push(format!("{}: no predictions_path", e.patient_id)),
                },
                Some(m) => {
                    match e.reconstruction_paths.get(m) {
                        Some(p) => self.check_file(&e.patient_id, p, &mut problems),
                        None => problems.push(format!("{}: no reconstruction for model {m:?}", e.patient_id)),
                    }
                    match e.reconstruction_predictions_paths.get(m) {
                        Some(p) => self.check_file(&e.patient_id, p, &mut problems),
                        None => problems.push(format!("{}: no predictions for model {m:?}", e.patient_id)),
                    }
                }
            }
        }
        finish(problems)
    }

    fn duplicate_ids(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| !seen.insert(e.patient_id.as_str()))
            .map(|e| format!("duplicate patient_id {:?}", e.patient_id))
            .collect()
    }

    fn check_file(&self, patient: &str, p: &Path, problems: &mut Vec<String>) {
        let full = self.resolve(p);
        if !full.is_file() {
            problems.push(format!("{patient}: missing file {}", full.display()));
        }
    }
}

fn finish(problems: Vec<String>) -> Result<(), ManifestError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ManifestError::Invalid(problems))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry {
            patient_id: id.into(),
            volume_path: format!("{id}.f32raw").into(),
            ground_truth_boxes_path: format!("{id}.xml").into(),
            predictions_path: None,
            reconstruction_paths: BTreeMap::new(),
            reconstruction_predictions_paths: BTreeMap::new(),
        }
    }

    #[test]
    fn enumerates_every_problem() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.f32raw"), b"").unwrap();
        fs::write(dir.path().join("a.xml"), b"").unwrap();
        let m = DatasetManifest {
            entries: vec![entry("a"), entry("a"), entry("b")],
            base_dir: dir.path().to_path_buf(),
        };
        let ManifestError::Invalid(problems) = m.validate().unwrap_err() else {
            panic!("expected Invalid");
        };
        assert_eq!(problems.len(), 3, "{problems:?}");
        assert!(problems[0].contains("duplicate"));
    }

    #[test]
    fn json_round_trip_and_relative_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = entry("a");
        e.reconstruction_paths.insert("unet".into(), "a_unet.f32raw".into());
        let m = DatasetManifest {
            entries: vec![e],
            base_dir: PathBuf::new(),
        };
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.entries, m.entries);
        assert_eq!(back.resolve(Path::new("x")), dir.path().join("x"));
        assert_eq!(back.models().into_iter().collect::<Vec<_>>(), vec!["unet".to_string()]);
        assert!(back.validate_for_model(Some("unet")).is_err());
    }
}
