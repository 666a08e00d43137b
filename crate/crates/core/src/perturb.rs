//! Constant-magnitude perturbations that hold nRMSE and PSNR fixed while
//! SSIM varies: random signs ("Noise") versus a uniform positive shift
//! ("Const").

use thiserror::Error;

use crate::volume::{ImageVolume, VolumeError};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("perturbation magnitude must be positive and finite, got {0}")]
    InvalidMagnitude(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbationMode {
    /// Adds `+c` or `-c` per pixel with a fair seeded coin.
    Signed,
    /// Adds `+c` to every pixel.
    Positive,
}

impl PerturbationMode {
    pub fn label_prefix(self) -> &'static str {
        match self {
            PerturbationMode::Signed => "Noise",
            PerturbationMode::Positive => "Const",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub magnitude: f64,
    pub mode: PerturbationMode,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(magnitude: f64, mode: PerturbationMode, seed: u64) -> Result<Self, PerturbError> {
        let spec = Self { magnitude, mode, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PerturbError> {
        if self.magnitude.is_finite() && self.magnitude > 0.0 {
            Ok(())
        } else {
            Err(PerturbError::InvalidMagnitude(self.magnitude))
        }
    }

    pub fn label(&self) -> String {
        format!("{} x{}", self.mode.label_prefix(), format_magnitude(self.magnitude))
    }
}

/// `1` prints as `1.0`, `0.5` as `0.5`.
pub fn format_magnitude(c: f64) -> String {
    if c.fract() == 0.0 {
        format!("{c:.1}")
    } else {
        format!("{c}")
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sign for flat pixel `index`, a pure function of `(seed, index)`.
pub fn sign_at(seed: u64, index: u64) -> f64 {
    let h = splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93));
    if h >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn perturb(v: &ImageVolume, spec: &PerturbationSpec) -> Result<ImageVolume, PerturbError> {
    spec.validate()?;
    let c = spec.magnitude;
    let out = match spec.mode {
        PerturbationMode::Positive => v.map_values(|_, x| x + c)?,
        PerturbationMode::Signed => v.map_values(|i, x| x + sign_at(spec.seed, i as u64) * c)?,
    };
    Ok(out)
}

/// Both variants for every magnitude, in input order, `Noise` before `Const`.
pub fn build_suite(v: &ImageVolume, magnitudes: &[f64], seed: u64) -> Result<Vec<(String, ImageVolume)>, PerturbError> {
    let mut suite = Vec::with_capacity(magnitudes.len() * 2);
    for &c in magnitudes {
        for mode in [PerturbationMode::Signed, PerturbationMode::Positive] {
            let spec = PerturbationSpec::new(c, mode, seed)?;
            let mut out = perturb(v, &spec)?;
            out.series_id = spec.label();
            suite.push((spec.label(), out));
        }
    }
    Ok(suite)
}
