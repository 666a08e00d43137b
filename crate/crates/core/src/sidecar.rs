//! `key=value` sidecar files that accompany raw binary payloads.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::volume::VolumeError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sidecar {
    entries: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn parse(text: &str) -> Result<Self, VolumeError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                VolumeError::Sidecar(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, VolumeError> {
        let text = fs::read_to_string(path).map_err(|e| VolumeError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Parses `dims=a,b,c,...` and checks the arity.
    pub fn dims(&self, arity: usize) -> Result<Vec<usize>, VolumeError> {
        let raw = self
            .get("dims")
            .ok_or_else(|| VolumeError::Sidecar("missing dims line".into()))?;
        let dims = raw
            .split(',')
            .map(|d| d.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| VolumeError::Sidecar(format!("bad dims {raw:?}: {e}")))?;
        if dims.len() != arity {
            return Err(VolumeError::Sidecar(format!(
                "dims {raw:?} has {} entries, expected {arity}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(VolumeError::Sidecar(format!("dims {raw:?} contain a zero extent")));
        }
        Ok(dims)
    }

    /// Serializes with `dims` first, then the remaining keys in sorted order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(d) = self.get("dims") {
            out.push_str(&format!("dims={d}\n"));
        }
        for (k, v) in &self.entries {
            if k != "dims" {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), VolumeError> {
        fs::write(path, self.render()).map_err(|e| VolumeError::io(path, e))
    }
}

/// The `.meta` path next to a payload file.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("meta")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dims_and_ignores_comments() {
        let s = Sidecar::parse("# header\ndims=3,4,5\npatient=p01\n").unwrap();
        assert_eq!(s.dims(3).unwrap(), vec![3, 4, 5]);
        assert_eq!(s.get("patient"), Some("p01"));
    }

    #[test]
    fn rejects_wrong_arity_and_garbage() {
        let s = Sidecar::parse("dims=3,4").unwrap();
        assert!(s.dims(3).is_err());
        assert!(Sidecar::parse("dims 3 4 5").is_err());
        assert!(Sidecar::parse("dims=0,4,5").unwrap().dims(3).is_err());
    }
}
