//! K-space (`.c64raw`) and mask (`.mask`) payloads with `.meta` sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array4};
use num_complex::Complex64;

use super::{KspaceError, MultiCoilKSpace, SamplingMask};
use crate::sidecar::{sidecar_path, Sidecar};
use crate::volume::VolumeError;

fn with_ext(path: &Path, ext: &str) -> PathBuf {
    if path.extension().and_then(|e| e.to_str()) == Some(ext) {
        path.to_path_buf()
    } else if path.extension().and_then(|e| e.to_str()) == Some("meta") {
        path.with_extension(ext)
    } else {
        let mut p = path.as_os_str().to_owned();
        p.push(".");
        p.push(ext);
        PathBuf::from(p)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, KspaceError> {
    fs::read(path).map_err(|e| VolumeError::io(path, e).into())
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), KspaceError> {
    fs::write(path, bytes).map_err(|e| VolumeError::io(path, e).into())
}

/// Interleaved little-endian `f32` (re, im) pairs in `(coil, kx, ky, kz)` order.
pub fn save_kspace(k: &MultiCoilKSpace, path: &Path) -> Result<(), KspaceError> {
    let payload = with_ext(path, "c64raw");
    let mut bytes = Vec::with_capacity(k.data.len() * 8);
    for v in k.data.iter() {
        bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    write(&payload, &bytes)?;
    let (c, x, y, z) = k.dims();
    let mut meta = Sidecar::default();
    meta.set("dims", format!("{c},{x},{y},{z}"));
    Ok(meta.write(&sidecar_path(&payload))?)
}

pub fn load_kspace(path: &Path) -> Result<MultiCoilKSpace, KspaceError> {
    let payload = with_ext(path, "c64raw");
    let dims = Sidecar::read(&sidecar_path(&payload))?.dims(4)?;
    let bytes = read(&payload)?;
    let expected = dims.iter().product::<usize>();
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected {
        return Err(VolumeError::SizeMismatch {
            expected,
            actual: bytes.len() / 8,
        }
        .into());
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    let values = bytes.chunks_exact(8).map(|b| Complex64::new(f(&b[..4]), f(&b[4..]))).collect();
    let data = Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), values).expect("size checked");
    MultiCoilKSpace::new(data)
}

/// Row-major `(ky, kz)` bits, most significant bit first within each byte.
pub fn save_mask(mask: &SamplingMask, path: &Path) -> Result<(), KspaceError> {
    let payload = with_ext(path, "mask");
    let mut bytes = vec![0u8; mask.kept().len().div_ceil(8)];
    for (i, &k) in mask.kept().iter().enumerate() {
        if k {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    write(&payload, &bytes)?;
    let (ky, kz) = mask.dims();
    let mut meta = Sidecar::default();
    meta.set("dims", format!("{ky},{kz}"));
    meta.set("acceleration", mask.acceleration);
    meta.set("center_fraction", mask.center_fraction);
    meta.set("seed", mask.seed);
    Ok(meta.write(&sidecar_path(&payload))?)
}

pub fn load_mask(path: &Path) -> Result<SamplingMask, KspaceError> {
    let payload = with_ext(path, "mask");
    let meta = Sidecar::read(&sidecar_path(&payload))?;
    let dims = meta.dims(2)?;
    let bytes = read(&payload)?;
    let n = dims[0] * dims[1];
    if bytes.len() != n.div_ceil(8) {
        return Err(VolumeError::SizeMismatch {
            expected: n.div_ceil(8),
            actual: bytes.len(),
        }
        .into());
    }
    let kept = Array2::from_shape_fn((dims[0], dims[1]), |(y, z)| {
        let i = y * dims[1] + z;
        bytes[i / 8] & (0x80 >> (i % 8)) != 0
    });
    let num = |key: &str, default: f64| -> Result<f64, KspaceError> {
        match meta.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| VolumeError::Sidecar(format!("bad {key} value {v:?}")).into()),
        }
    };
    let seed = match meta.get("seed") {
        None => 0,
        Some(v) => v
            .parse()
            .map_err(|_| VolumeError::Sidecar(format!("bad seed value {v:?}")))?,
    };
    Ok(SamplingMask::from_kept(
        kept,
        num("acceleration", f64::NAN)?,
        num("center_fraction", f64::NAN)?,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{poisson_mask, PoissonParams};

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = poisson_mask(13, 11, PoissonParams::new(4.0, 0.1, 9)).unwrap();
        let path = dir.path().join("m.mask");
        save_mask(&m, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), m);
        assert_eq!(fs::read(&path).unwrap().len(), (13 * 11usize).div_ceil(8));
    }

    #[test]
    fn kspace_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array4::from_shape_fn((2, 3, 4, 5), |(c, x, y, z)| {
            Complex64::new((c + x) as f64 * 0.5, (y as f64 - z as f64) * 0.25)
        });
        let k = MultiCoilKSpace::new(data).unwrap();
        let path = dir.path().join("k");
        save_kspace(&k, &path).unwrap();
        assert_eq!(load_kspace(&path).unwrap(), k);
    }

    #[test]
    fn truncated_kspace_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("k.c64raw"), [0u8; 12]).unwrap();
        fs::write(dir.path().join("k.meta"), "dims=1,1,1,2\n").unwrap();
        assert!(load_kspace(&dir.path().join("k.c64raw")).is_err());
    }
}
