//! Percentile-based intensity normalization.

use thiserror::Error;

use crate::volume::{ImageVolume, VolumeError};

/// Mean and standard deviation the detector was trained with. Kept for
/// reference only; nothing in this crate standardizes with them.
pub const DETECTOR_INPUT_MEAN: f64 = 0.07991;
pub const DETECTOR_INPUT_STD: f64 = 0.07168;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("invalid normalization spec: {0}")]
    InvalidSpec(String),
    #[error("percentile values coincide at {0}; the intensity map has no slope")]
    DegenerateRange(f64),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationSpec {
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    pub target_min: f64,
    pub target_max: f64,
    pub clip: bool,
}

impl Default for NormalizationSpec {
    /// Min-max normalization to `[0, 1]` without clipping.
    fn default() -> Self {
        Self {
            lower_percentile: 0.0,
            upper_percentile: 100.0,
            target_min: 0.0,
            target_max: 1.0,
            clip: false,
        }
    }
}

impl NormalizationSpec {
    pub fn new(
        lower_percentile: f64,
        upper_percentile: f64,
        target_min: f64,
        target_max: f64,
        clip: bool,
    ) -> Result<Self, NormalizeError> {
        let spec = Self {
            lower_percentile,
            upper_percentile,
            target_min,
            target_max,
            clip,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NormalizeError> {
        let in_range = |p: f64| (0.0..=100.0).contains(&p);
        if !in_range(self.lower_percentile) || !in_range(self.upper_percentile) {
            return Err(NormalizeError::InvalidSpec(
                "percentiles must lie in [0, 100]".into(),
            ));
        }
        if self.lower_percentile >= self.upper_percentile {
            return Err(NormalizeError::InvalidSpec(
                "lower percentile must be below upper percentile".into(),
            ));
        }
        if !(self.target_min < self.target_max) {
            return Err(NormalizeError::InvalidSpec(
                "target_min must be below target_max".into(),
            ));
        }
        Ok(())
    }
}

/// Percentile of `sorted` (ascending) with linear interpolation between
/// closest ranks.
pub fn percentile_of_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// The two intensity anchors `(value at lower_percentile, value at upper_percentile)`.
pub fn percentile_range(values: &[f64], spec: &NormalizationSpec) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        percentile_of_sorted(&sorted, spec.lower_percentile),
        percentile_of_sorted(&sorted, spec.upper_percentile),
    )
}

pub fn normalize_values(values: &[f64], spec: &NormalizationSpec) -> Result<Vec<f64>, NormalizeError> {
    spec.validate()?;
    let (lo, hi) = percentile_range(values, spec);
    if hi <= lo {
        return Err(NormalizeError::DegenerateRange(lo));
    }
    let scale = (spec.target_max - spec.target_min) / (hi - lo);
    Ok(values
        .iter()
        .map(|&v| {
            let out = spec.target_min + (v - lo) * scale;
            if spec.clip {
                out.clamp(spec.target_min, spec.target_max)
            } else {
                out
            }
        })
        .collect())
}

/// Maps the value at `lower_percentile` to `target_min` and the value at
/// `upper_percentile` to `target_max`, over the whole volume.
pub fn percentile_normalize(
    volume: &ImageVolume,
    spec: &NormalizationSpec,
) -> Result<ImageVolume, NormalizeError> {
    let values: Vec<f64> = volume.data().iter().copied().collect();
    let out = normalize_values(&values, spec)?;
    Ok(ImageVolume::from_vec(
        volume.dims(),
        out,
        volume.patient_id.clone(),
        volume.series_id.clone(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(values: Vec<f64>) -> ImageVolume {
        let n = values.len();
        ImageVolume::from_vec((1, 1, n), values, "p", "s").unwrap()
    }

    #[test]
    fn min_max_map_over_0_to_100() {
        let v = flat((0..=100).map(f64::from).collect());
        let out = percentile_normalize(&v, &NormalizationSpec::default()).unwrap();
        for (i, &x) in out.data().iter().enumerate() {
            assert!((x - i as f64 / 100.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_values() {
        let out = percentile_normalize(&flat(vec![0.0, 10.0, 20.0]), &NormalizationSpec::default()).unwrap();
        assert_eq!(out.data().iter().copied().collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_volume_is_degenerate() {
        let err = percentile_normalize(&flat(vec![3.0; 8]), &NormalizationSpec::default()).unwrap_err();
        assert!(matches!(err, NormalizeError::DegenerateRange(_)));
    }

    #[test]
    fn clip_and_extrapolate() {
        let spec = NormalizationSpec::new(25.0, 75.0, 0.0, 1.0, false).unwrap();
        let values: Vec<f64> = (0..=4).map(f64::from).collect();
        // percentiles 25 and 75 of {0..4} are 1 and 3
        assert_eq!(normalize_values(&values, &spec).unwrap(), vec![-0.5, 0.0, 0.5, 1.0, 1.5]);
        let clipped = NormalizationSpec { clip: true, ..spec };
        assert_eq!(normalize_values(&values, &clipped).unwrap(), vec![0.0, 0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn invalid_specs() {
        assert!(NormalizationSpec::new(50.0, 50.0, 0.0, 1.0, false).is_err());
        assert!(NormalizationSpec::new(0.0, 101.0, 0.0, 1.0, false).is_err());
        assert!(NormalizationSpec::new(0.0, 100.0, 1.0, 1.0, false).is_err());
    }

    proptest! {
        #[test]
        fn affine_invariant(
            values in proptest::collection::vec(-100.0f64..100.0, 3..40),
            a in 0.01f64..50.0,
            b in -100.0f64..100.0,
            lo in 0.0f64..40.0,
            hi in 60.0f64..100.0,
        ) {
            let spec = NormalizationSpec::new(lo, hi, -1.0, 2.0, false).unwrap();
            let (p_lo, p_hi) = percentile_range(&values, &spec);
            prop_assume!(p_hi - p_lo > 1e-6);
            let base = normalize_values(&values, &spec).unwrap();
            let shifted: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let out = normalize_values(&shifted, &spec).unwrap();
            for (x, y) in base.iter().zip(&out) {
                prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
