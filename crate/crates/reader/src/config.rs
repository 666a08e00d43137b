use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::response::CompartmentCalls;
use crate::stratify::Quota;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("study config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("study config is invalid:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    TruePositive,
    FalsePositive,
    AnomalyFree,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::TruePositive, Stratum::FalsePositive, Stratum::AnomalyFree];

    pub fn key(self) -> &'static str {
        match self {
            Stratum::TruePositive => "true_positive",
            Stratum::FalsePositive => "false_positive",
            Stratum::AnomalyFree => "anomaly_free",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ImageSet {
    Original,
    Reconstructed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoxMode {
    WithoutBoxes,
    WithBoxes,
}

/// Image set and box visibility, written `reconstructed_with_boxes` etc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Condition {
    pub image: ImageSet,
    pub boxes: BoxMode,
}

impl Condition {
    pub const fn new(image: ImageSet, boxes: BoxMode) -> Self {
        Self { image, boxes }
    }

    pub fn shows_boxes(self) -> bool {
        self.boxes == BoxMode::WithBoxes
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let image = match self.image {
            ImageSet::Original => "original",
            ImageSet::Reconstructed => "reconstructed",
        };
        let boxes = match self.boxes {
            BoxMode::WithBoxes => "with_boxes",
            BoxMode::WithoutBoxes => "without_boxes",
        };
        write!(f, "{image}_{boxes}")
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (image, rest) = if let Some(r) = s.strip_prefix("original_") {
            (ImageSet::Original, r)
        } else if let Some(r) = s.strip_prefix("reconstructed_") {
            (ImageSet::Reconstructed, r)
        } else {
            return Err(format!("unknown condition {s:?}"));
        };
        let boxes = match rest {
            "with_boxes" => BoxMode::WithBoxes,
            "without_boxes" => BoxMode::WithoutBoxes,
            _ => return Err(format!("unknown condition {s:?}")),
        };
        Ok(Self { image, boxes })
    }
}

impl TryFrom<String> for Condition {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDescriptor {
    pub id: String,
    pub stratum: Stratum,
    pub volume_path: PathBuf,
    #[serde(default)]
    pub reconstruction_path: Option<PathBuf>,
    /// Detector output shown under `with_boxes` conditions.
    #[serde(default)]
    pub predictions_path: Option<PathBuf>,
    pub ground_truth: CompartmentCalls,
}

fn default_quota() -> Quota {
    Quota::default()
}

fn default_overlap() -> usize {
    10
}

fn default_threshold() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub readers: Vec<String>,
    pub cases: Vec<CaseDescriptor>,
    pub conditions: Vec<Condition>,
    #[serde(default = "default_quota")]
    pub quota: Quota,
    /// Number of cases every reader grades.
    #[serde(default = "default_overlap")]
    pub overlap: usize,
    /// Fixed overlap cases; drawn at random when empty.
    #[serde(default)]
    pub overlap_case_ids: Vec<String>,
    /// Minimum seconds between a reader's sessions on the same case.
    pub washout_seconds: u64,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub box_confidence_threshold: f64,
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut c: StudyConfig = serde_json::from_str(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        c.validate()?;
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn case(&self, id: &str) -> Option<&CaseDescriptor> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn ground_truth(&self) -> BTreeMap<String, CompartmentCalls> {
        self.cases.iter().map(|c| (c.id.clone(), c.ground_truth)).collect()
    }

    /// Every problem at once: duplicate ids, unknown overlap cases, missing
    /// files, reconstructed conditions without reconstructions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.readers.is_empty() {
            problems.push("no readers".to_string());
        }
        let mut readers = BTreeSet::new();
        for r in &self.readers {
            if !readers.insert(r) {
                problems.push(format!("duplicate reader {r:?}"));
            }
        }
        if self.conditions.is_empty() {
            problems.push("no conditions".into());
        }
        let unique: BTreeSet<_> = self.conditions.iter().collect();
        if unique.len() != self.conditions.len() {
            problems.push("conditions repeat".into());
        }
        let needs_recon = self.conditions.iter().any(|c| c.image == ImageSet::Reconstructed);
        let needs_boxes = self.conditions.iter().any(|c| c.shows_boxes());
        let mut ids = BTreeSet::new();
        for c in &self.cases {
            if !ids.insert(c.id.as_str()) {
                problems.push(format!("duplicate case id {:?}", c.id));
            }
            let mut paths = vec![&c.volume_path];
            match &c.reconstruction_path {
                Some(p) => paths.push(p),
                None if needs_recon => problems.push(format!("{}: no reconstruction_path", c.id)),
                None => {}
            }
            match &c.predictions_path {
                Some(p) => paths.push(p),
                None if needs_boxes => problems.push(format!("{}: no predictions_path", c.id)),
                None => {}
            }
            for p in paths {
                if !self.resolve(p).is_file() {
                    problems.push(format!("{}: missing file {}", c.id, self.resolve(p).display()));
                }
            }
        }
        for id in &self.overlap_case_ids {
            if !ids.contains(id.as_str()) {
                problems.push(format!("overlap case {id:?} is not a study case"));
            }
        }
        if !self.overlap_case_ids.is_empty() && self.overlap_case_ids.len() != self.overlap {
            problems.push(format!(
                "overlap is {} but {} overlap_case_ids are listed",
                self.overlap,
                self.overlap_case_ids.len()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}
