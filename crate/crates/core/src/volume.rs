//! 3D image volumes and the raw `.f32raw` + `.meta` file format.
//!
//! A volume is indexed `(slice, row, col)`. Values are held as `f64` so that
//! metric arithmetic on perturbed copies is exact to double precision; the
//! on-disk payload is little-endian `f32` in C order.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::{Array3, ArrayView2};
use thiserror::Error;

use crate::sidecar::{sidecar_path, Sidecar};

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed sidecar: {0}")]
    Sidecar(String),
    #[error("payload holds {actual} values but dims declare {expected}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("volume must have positive extents, got {0:?}")]
    EmptyExtent((usize, usize, usize)),
}

impl VolumeError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        VolumeError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    data: Array3<f64>,
    pub patient_id: String,
    pub series_id: String,
}

impl ImageVolume {
    pub fn new(
        data: Array3<f64>,
        patient_id: impl Into<String>,
        series_id: impl Into<String>,
    ) -> Result<Self, VolumeError> {
        let (s, r, c) = data.dim();
        if s == 0 || r == 0 || c == 0 {
            return Err(VolumeError::EmptyExtent((s, r, c)));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(VolumeError::NonFinite { index, value });
        }
        Ok(Self {
            data,
            patient_id: patient_id.into(),
            series_id: series_id.into(),
        })
    }

    /// Builds a volume from C-ordered values.
    pub fn from_vec(
        dims: (usize, usize, usize),
        values: Vec<f64>,
        patient_id: impl Into<String>,
        series_id: impl Into<String>,
    ) -> Result<Self, VolumeError> {
        let expected = dims.0 * dims.1 * dims.2;
        if values.len() != expected {
            return Err(VolumeError::SizeMismatch {
                expected,
                actual: values.len(),
            });
        }
        let data = Array3::from_shape_vec(dims, values).expect("length checked above");
        Self::new(data, patient_id, series_id)
    }

    /// `(n_slices, n_rows, n_cols)`
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn n_slices(&self) -> usize {
        self.data.dim().0
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn slice(&self, index: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), index)
    }

    /// Returns a volume with the same metadata and every value mapped by `f`.
    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self, VolumeError> {
        let values: Vec<f64> = self.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        Self::from_vec(self.dims(), values, self.patient_id.clone(), self.series_id.clone())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Reads `<name>.f32raw` and its `<name>.meta` sidecar.
pub fn load_volume(path: &Path) -> Result<ImageVolume, VolumeError> {
    let payload_path = payload_path(path);
    let meta = Sidecar::read(&sidecar_path(&payload_path))?;
    let dims = meta.dims(3)?;
    let bytes = fs::read(&payload_path).map_err(|e| VolumeError::io(&payload_path, e))?;
    let expected = dims[0] * dims[1] * dims[2];
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(VolumeError::SizeMismatch {
            expected,
            actual: bytes.len() / 4,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ImageVolume::from_vec(
        (dims[0], dims[1], dims[2]),
        values,
        meta.get("patient").unwrap_or_default(),
        meta.get("series").unwrap_or_default(),
    )
}

/// Writes the payload and sidecar. Values are narrowed to `f32`; volumes read
/// from disk therefore round-trip bit-exactly.
pub fn save_volume(volume: &ImageVolume, path: &Path) -> Result<(), VolumeError> {
    let payload_path = payload_path(path);
    let mut bytes = Vec::with_capacity(volume.data.len() * 4);
    for (index, &v) in volume.data.iter().enumerate() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(VolumeError::NonFinite { index, value: v });
        }
        bytes.extend_from_slice(&narrowed.to_le_bytes());
    }
    fs::write(&payload_path, bytes).map_err(|e| VolumeError::io(&payload_path, e))?;
    let (s, r, c) = volume.dims();
    let mut meta = Sidecar::default();
    meta.set("dims", format!("{s},{r},{c}"));
    meta.set("patient", &volume.patient_id);
    meta.set("series", &volume.series_id);
    meta.write(&sidecar_path(&payload_path))
}

fn payload_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("f32raw") => path.to_path_buf(),
        Some("meta") => path.with_extension("f32raw"),
        _ => {
            let mut p = path.as_os_str().to_owned();
            p.push(".f32raw");
            PathBuf::from(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = ImageVolume::new(Array3::zeros((2, 2, 2)), "p", "s").unwrap();
        let path = dir.path().join("zeros.f32raw");
        save_volume(&v, &path).unwrap();
        assert_eq!(load_volume(&path).unwrap(), v);
    }

    #[test]
    fn indexed_value_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = Array3::zeros((3, 4, 5));
        data[[2, 3, 4]] = 7.5;
        let v = ImageVolume::new(data, "p", "s").unwrap();
        let path = dir.path().join("v");
        save_volume(&v, &path).unwrap();
        // payload layout: flat index of (2,3,4) in C order is 2*20 + 3*5 + 4 = 59
        let bytes = fs::read(dir.path().join("v.f32raw")).unwrap();
        assert_eq!(&bytes[59 * 4..60 * 4], &7.5f32.to_le_bytes());
        let back = load_volume(&dir.path().join("v.meta")).unwrap();
        assert_eq!(back.data()[[2, 3, 4]], 7.5);
        assert_eq!(back.dims(), (3, 4, 5));
    }

    #[test]
    fn short_payload_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.f32raw"), [0u8; 28]).unwrap();
        fs::write(dir.path().join("a.meta"), "dims=2,2,2\n").unwrap();
        let err = load_volume(&dir.path().join("a.f32raw")).unwrap_err();
        assert!(matches!(err, VolumeError::SizeMismatch { expected: 8, actual: 7 }));
    }

    #[test]
    fn non_finite_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for v in [0.0f32, f32::NAN] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.path().join("a.f32raw"), bytes).unwrap();
        fs::write(dir.path().join("a.meta"), "dims=1,1,2\n").unwrap();
        assert!(matches!(
            load_volume(&dir.path().join("a.f32raw")),
            Err(VolumeError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn malformed_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.f32raw"), [0u8; 4]).unwrap();
        fs::write(dir.path().join("a.meta"), "patient=x\n").unwrap();
        assert!(matches!(
            load_volume(&dir.path().join("a.f32raw")),
            Err(VolumeError::Sidecar(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn save_load_is_bit_exact(
            dims in (1usize..4, 1usize..5, 1usize..5),
            seed in proptest::collection::vec(-1.0e6f32..1.0e6, 80),
        ) {
            let n = dims.0 * dims.1 * dims.2;
            let values: Vec<f64> = seed.iter().cycle().take(n).map(|&v| v as f64).collect();
            let v = ImageVolume::from_vec(dims, values, "pid", "sid").unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.f32raw");
            save_volume(&v, &path).unwrap();
            let back = load_volume(&path).unwrap();
            prop_assert_eq!(back.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            v.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            prop_assert_eq!(back.patient_id, "pid");
        }
    }
}
