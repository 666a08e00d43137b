//! Variable-density Poisson-disc undersampling of the `(ky, kz)` plane.
//!
//! Candidates are visited in a seeded random order (dart throwing over the
//! grid). A candidate at distance `d` from the k-space center is accepted when
//! no earlier dart lies closer than `r(d) = r0 * (1 + alpha * d / d_max)`, so
//! samples thin out towards the periphery. The central square is always kept.
//! `r0` is found by bisection until the kept fraction is close to `1 / R`.

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::KspaceError;

const MAX_CALIBRATION_STEPS: usize = 64;
/// Accepted relative deviation of the kept fraction from `1 / R`.
pub const FRACTION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    kept: Array2<bool>,
    pub acceleration: f64,
    pub center_fraction: f64,
    pub seed: u64,
}

impl SamplingMask {
    pub fn from_kept(kept: Array2<bool>, acceleration: f64, center_fraction: f64, seed: u64) -> Self {
        Self {
            kept,
            acceleration,
            center_fraction,
            seed,
        }
    }

    /// Every location sampled.
    pub fn full(ky: usize, kz: usize) -> Self {
        Self::from_kept(Array2::from_elem((ky, kz), true), 1.0, 1.0, 0)
    }

    /// Only the central `ceil(fraction * extent)` square.
    pub fn center_only(ky: usize, kz: usize, center_fraction: f64) -> Self {
        let mut kept = Array2::from_elem((ky, kz), false);
        let (ry, rz) = center_ranges(ky, kz, center_fraction);
        for y in ry.clone() {
            for z in rz.clone() {
                kept[[y, z]] = true;
            }
        }
        Self::from_kept(kept, f64::INFINITY, center_fraction, 0)
    }

    pub fn kept(&self) -> &Array2<bool> {
        &self.kept
    }

    pub fn dims(&self) -> (usize, usize) {
        self.kept.dim()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept.iter().filter(|&&k| k).count() as f64 / self.kept.len() as f64
    }

    /// True when the central square is entirely sampled.
    pub fn center_fully_sampled(&self) -> bool {
        let (ky, kz) = self.dims();
        let (ry, rz) = center_ranges(ky, kz, self.center_fraction);
        ry.into_iter().all(|y| rz.clone().all(|z| self.kept[[y, z]]))
    }
}

/// Side ranges of the central square: `ceil(fraction * extent)` wide,
/// positioned around the DC index `extent / 2`.
pub fn center_ranges(ky: usize, kz: usize, fraction: f64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let side = |n: usize| ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let range = |n: usize| {
        let s = side(n);
        let start = (n / 2).saturating_sub(s / 2).min(n - s);
        start..start + s
    };
    (range(ky), range(kz))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonParams {
    pub acceleration: f64,
    pub center_fraction: f64,
    /// Radius growth from center to corner.
    pub alpha: f64,
    pub seed: u64,
}

impl PoissonParams {
    pub fn new(acceleration: f64, center_fraction: f64, seed: u64) -> Self {
        Self {
            acceleration,
            center_fraction,
            alpha: 2.0,
            seed,
        }
    }
}

/// Seeded Fisher-Yates permutation of `0..n`.
fn visit_order(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

struct DartThrower {
    ky: usize,
    kz: usize,
    order: Vec<usize>,
    center: Array2<bool>,
    alpha: f64,
}

impl DartThrower {
    fn radius(&self, y: usize, z: usize, r0: f64) -> f64 {
        let (cy, cz) = ((self.ky / 2) as f64, (self.kz / 2) as f64);
        let d = ((y as f64 - cy).powi(2) + (z as f64 - cz).powi(2)).sqrt();
        let d_max = cy.max(self.ky as f64 - 1.0 - cy).hypot(cz.max(self.kz as f64 - 1.0 - cz));
        r0 * (1.0 + self.alpha * d / d_max)
    }

    fn throw(&self, r0: f64) -> Array2<bool> {
        let mut darts = Array2::from_elem((self.ky, self.kz), false);
        let mut kept = self.center.clone();
        for &idx in &self.order {
            let (y, z) = (idx / self.kz, idx % self.kz);
            if self.center[[y, z]] {
                continue;
            }
            let r = self.radius(y, z, r0);
            let reach = r.ceil() as isize;
            let mut clear = true;
            'scan: for dy in -reach..=reach {
                let yy = y as isize + dy;
                if yy < 0 || yy >= self.ky as isize {
                    continue;
                }
                for dz in -reach..=reach {
                    let zz = z as isize + dz;
                    if zz < 0 || zz >= self.kz as isize {
                        continue;
                    }
                    if darts[[yy as usize, zz as usize]] && ((dy * dy + dz * dz) as f64) < r * r {
                        clear = false;
                        break 'scan;
                    }
                }
            }
            if clear {
                darts[[y, z]] = true;
                kept[[y, z]] = true;
            }
        }
        kept
    }
}

fn fraction(kept: &Array2<bool>) -> f64 {
    kept.iter().filter(|&&k| k).count() as f64 / kept.len() as f64
}

/// Center-weighted Poisson-disc mask over a `ky_extent x kz_extent` plane.
pub fn poisson_mask(ky_extent: usize, kz_extent: usize, params: PoissonParams) -> Result<SamplingMask, KspaceError> {
    let PoissonParams {
        acceleration,
        center_fraction,
        alpha,
        seed,
    } = params;
    if ky_extent < 8 || kz_extent < 8 {
        return Err(KspaceError::InvalidMaskParams(format!(
            "extents must be >= 8, got {ky_extent}x{kz_extent}"
        )));
    }
    if !(acceleration >= 1.0 && acceleration.is_finite()) {
        return Err(KspaceError::InvalidMaskParams(format!("acceleration must be >= 1, got {acceleration}")));
    }
    if !(center_fraction > 0.0 && center_fraction < 1.0) {
        return Err(KspaceError::InvalidMaskParams(format!(
            "center fraction must lie in (0, 1), got {center_fraction}"
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(KspaceError::InvalidMaskParams(format!("alpha must be >= 0, got {alpha}")));
    }
    if acceleration == 1.0 {
        return Ok(SamplingMask::from_kept(
            Array2::from_elem((ky_extent, kz_extent), true),
            acceleration,
            center_fraction,
            seed,
        ));
    }

    let target = 1.0 / acceleration;
    let center = SamplingMask::center_only(ky_extent, kz_extent, center_fraction).kept;
    let thrower = DartThrower {
        ky: ky_extent,
        kz: kz_extent,
        order: visit_order(ky_extent * kz_extent, seed),
        center,
        alpha,
    };
    let (mut lo, mut hi) = (0.5, ky_extent.max(kz_extent) as f64);
    let mut best: Option<(f64, Array2<bool>)> = None;
    for _ in 0..MAX_CALIBRATION_STEPS {
        let r0 = 0.5 * (lo + hi);
        let kept = thrower.throw(r0);
        let f = fraction(&kept);
        if best.as_ref().is_none_or(|(bf, _)| (f - target).abs() < (bf - target).abs()) {
            best = Some((f, kept));
        }
        if (f - target).abs() <= 0.01 * target {
            break;
        }
        // larger radius, fewer samples
        if f > target {
            lo = r0;
        } else {
            hi = r0;
        }
    }
    let (f, kept) = best.expect("at least one calibration step");
    if (f - target).abs() > FRACTION_TOLERANCE * target {
        return Err(KspaceError::CalibrationFailed {
            target,
            best: f,
            iterations: MAX_CALIBRATION_STEPS,
        });
    }
    Ok(SamplingMask::from_kept(kept, acceleration, center_fraction, seed))
}
