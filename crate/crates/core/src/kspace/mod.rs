//! Acquisition-side simulation: undersampling masks, centered orthonormal
//! Fourier transforms, root-sum-of-squares coil combination and zero-filled
//! reconstruction.
//!
//! Multi-coil k-space is indexed `(coil, kx, ky, kz)`. Undersampling acts on
//! the `(ky, kz)` phase-encode plane; `kx` is the fully sampled readout.
//! Reconstruction transforms `kz → z`, then `(kx, ky) → (x, y)` per `z`, and
//! yields an image volume indexed `(z, x, y)`.

mod io;
mod mask;
pub mod phantom;

pub use io::{load_kspace, load_mask, save_kspace, save_mask};
pub use mask::{poisson_mask, PoissonParams, SamplingMask};

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4, ArrayView3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::volume::{ImageVolume, VolumeError};

#[derive(Debug, Error)]
pub enum KspaceError {
    #[error("k-space must have finite values and at least one coil")]
    InvalidData,
    #[error("mask extents {mask:?} do not match k-space (ky, kz) extents {kspace:?}")]
    ExtentMismatch {
        mask: (usize, usize),
        kspace: (usize, usize),
    },
    #[error("invalid mask parameters: {0}")]
    InvalidMaskParams(String),
    #[error("mask calibration did not reach kept fraction {target:.5} +/- 5% (best {best:.5}) in {iterations} iterations")]
    CalibrationFailed {
        target: f64,
        best: f64,
        iterations: usize,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiCoilKSpace {
    data: Array4<Complex64>,
}

impl MultiCoilKSpace {
    pub fn new(data: Array4<Complex64>) -> Result<Self, KspaceError> {
        if data.dim().0 == 0 || data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(KspaceError::InvalidData);
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array4<Complex64> {
        &self.data
    }

    pub fn n_coils(&self) -> usize {
        self.data.dim().0
    }

    /// `(coils, kx, ky, kz)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.data.dim()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

/// Centered orthonormal transform along `axis`, applied in place:
/// `fftshift(F(ifftshift(x))) / sqrt(n)`.
fn centered_transform(data: &mut Array4<Complex64>, axis: usize, direction: Direction) {
    let n = data.len_of(Axis(axis));
    let mut planner = FftPlanner::<f64>::new();
    let fft: Arc<dyn Fft<f64>> = match direction {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let scale = 1.0 / (n as f64).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for mut lane in data.lanes_mut(Axis(axis)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        buf.rotate_left(n / 2); // ifftshift
        fft.process_with_scratch(&mut buf, &mut scratch);
        buf.rotate_right(n / 2); // fftshift
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = *b * scale;
        }
    }
}

/// `(coil, kx, ky, kz) → (coil, kx, ky, z)`
pub fn ifft_1d_kz(k: &MultiCoilKSpace) -> Array4<Complex64> {
    let mut out = k.data.clone();
    centered_transform(&mut out, 3, Direction::Inverse);
    out
}

/// `(coil, kx, ky, z) → (coil, kx, ky, kz)`
pub fn fft_1d_z(hybrid: &Array4<Complex64>) -> Array4<Complex64> {
    let mut out = hybrid.clone();
    centered_transform(&mut out, 3, Direction::Forward);
    out
}

/// In-plane inverse transform per coil and `z`: `(coil, kx, ky, z) → (coil, x, y, z)`.
pub fn ifft_2d(hybrid: &Array4<Complex64>) -> Array4<Complex64> {
    let mut out = hybrid.clone();
    centered_transform(&mut out, 1, Direction::Inverse);
    centered_transform(&mut out, 2, Direction::Inverse);
    out
}

/// `(coil, x, y, z) → (coil, kx, ky, z)`
pub fn fft_2d(images: &Array4<Complex64>) -> Array4<Complex64> {
    let mut out = images.clone();
    centered_transform(&mut out, 1, Direction::Forward);
    centered_transform(&mut out, 2, Direction::Forward);
    out
}

/// Per pixel `sqrt(sum_coils |v|^2)` over a `(coil, x, y)` stack.
pub fn rss_combine(coil_images: ArrayView3<Complex64>) -> Array2<f64> {
    let (_, nx, ny) = coil_images.dim();
    let mut out = Array2::<f64>::zeros((nx, ny));
    for coil in coil_images.outer_iter() {
        Zip::from(&mut out).and(&coil).for_each(|o, v| *o += v.norm_sqr());
    }
    out.mapv_inplace(f64::sqrt);
    out
}

/// RSS of `(coil, x, y, z)` coil images into a `(z, x, y)` volume.
pub fn rss_volume(coil_images: &Array4<Complex64>, patient_id: &str, series_id: &str) -> Result<ImageVolume, KspaceError> {
    let (_, nx, ny, nz) = coil_images.dim();
    let mut out = Array3::<f64>::zeros((nz, nx, ny));
    for z in 0..nz {
        let stack = coil_images.index_axis(Axis(3), z);
        out.index_axis_mut(Axis(0), z).assign(&rss_combine(stack));
    }
    Ok(ImageVolume::new(out, patient_id, series_id)?)
}

/// Zeroes every `(ky, kz)` location the mask does not keep, across coils and `kx`.
pub fn apply_mask(k: &MultiCoilKSpace, mask: &SamplingMask) -> Result<MultiCoilKSpace, KspaceError> {
    let (_, _, ky, kz) = k.dims();
    if mask.dims() != (ky, kz) {
        return Err(KspaceError::ExtentMismatch {
            mask: mask.dims(),
            kspace: (ky, kz),
        });
    }
    let mut data = k.data.clone();
    for mut coil in data.outer_iter_mut() {
        for mut plane in coil.outer_iter_mut() {
            Zip::from(&mut plane).and(mask.kept()).for_each(|v, &keep| {
                if !keep {
                    *v = Complex64::new(0.0, 0.0);
                }
            });
        }
    }
    Ok(MultiCoilKSpace { data })
}

/// Full image-formation path on already-masked (or fully sampled) data.
pub fn reconstruct(k: &MultiCoilKSpace, patient_id: &str, series_id: &str) -> Result<ImageVolume, KspaceError> {
    let coil_images = ifft_2d(&ifft_1d_kz(k));
    rss_volume(&coil_images, patient_id, series_id)
}

pub fn zero_fill_recon(k: &MultiCoilKSpace, mask: &SamplingMask) -> Result<ImageVolume, KspaceError> {
    reconstruct(&apply_mask(k, mask)?, "", "zero-filled")
}
