//! Small synthetic test set: phantom volumes with planted lesions, their
//! ground-truth boxes, two reconstructions and scripted detector output.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::boxes::{serialize_predictions, serialize_voc_boxes, BoundingBox, BoxLabel, Compartment, Prediction};
use crate::kspace::phantom::{kspace_from_image, shepp_logan};
use crate::kspace::{poisson_mask, reconstruct, zero_fill_recon, PoissonParams};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::volume::save_volume;

pub const ZERO_FILLED: &str = "zero_filled";
pub const DENOISER: &str = "denoiser";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiniSpec {
    pub patients: usize,
    pub size: usize,
    pub slices: usize,
    pub coils: usize,
    pub acceleration: f64,
    pub seed: u64,
}

impl Default for MiniSpec {
    fn default() -> Self {
        Self {
            patients: 4,
            size: 64,
            slices: 8,
            coils: 4,
            acceleration: 4.0,
            seed: 7,
        }
    }
}

struct Lesion {
    row: usize,
    col: usize,
    radius: usize,
    slices: std::ops::RangeInclusive<usize>,
}

fn lesion_for(p: usize, spec: &MiniSpec) -> Lesion {
    let n = spec.size;
    Lesion {
        row: n * 3 / 8 + (p * 5) % (n / 4),
        col: n * 3 / 8 + (p * 7) % (n / 4),
        radius: 3,
        slices: 2..=spec.slices.saturating_sub(3).max(2),
    }
}

fn patient_image(p: usize, lesion: &Lesion, spec: &MiniSpec) -> Array3<f64> {
    let mut image = shepp_logan(spec.size, spec.size, spec.slices);
    let r2 = (lesion.radius * lesion.radius) as isize;
    for ((x, y, z), v) in image.indexed_iter_mut() {
        *v *= 1.0 + 0.05 * p as f64 * x as f64 / spec.size as f64;
        let (dx, dy) = (x as isize - lesion.row as isize, y as isize - lesion.col as isize);
        if lesion.slices.contains(&z) && dx * dx + dy * dy <= r2 {
            *v += 0.6;
        }
    }
    image
}

/// Ground truth: one box per lesion slice, `x` along columns, `y` along rows.
fn lesion_boxes(p: usize, lesion: &Lesion) -> Result<Vec<BoundingBox>, HarnessError> {
    let label = BoxLabel::Compartment(Compartment::ALL[p % Compartment::ALL.len()]);
    let half = lesion.radius as f64 + 1.0;
    let (r, c) = (lesion.row as f64 + 0.5, lesion.col as f64 + 0.5);
    lesion
        .slices
        .clone()
        .map(|z| Ok(BoundingBox::new(c - half, r - half, c + half, r + half, z, label)?))
        .collect()
}

fn jittered(b: &BoundingBox, rng: &mut ChaCha8Rng, amount: f64, confidence: f64) -> Result<Prediction, HarnessError> {
    let mut j = || rng.random_range(-amount..=amount);
    let bbox = BoundingBox::new(b.x_min + j(), b.y_min + j(), b.x_max + j(), b.y_max + j(), b.slice_index, BoxLabel::Anomaly)?;
    Ok(Prediction::new(bbox, confidence)?)
}

fn square(col: f64, row: f64, side: f64, slice: usize, confidence: f64) -> Result<Prediction, HarnessError> {
    let b = BoundingBox::new(col, row, col + side, row + side, slice, BoxLabel::Anomaly)?;
    Ok(Prediction::new(b, confidence)?)
}

/// Scripted detector: `quality` in (0, 1] sets how many lesions it finds,
/// how confident it is and how tight its boxes are.
fn scripted_predictions(
    patient: &str,
    p: usize,
    gts: &[BoundingBox],
    quality: f64,
    spec: &MiniSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(String, Prediction)>, HarnessError> {
    let mut out = Vec::new();
    for (i, g) in gts.iter().enumerate() {
        let found = quality >= 1.0 || ((i + p) as f64 * quality).fract() < quality;
        if found {
            let conf = 0.7 + 0.29 * quality * rng.random_range(0.6..=1.0);
            out.push((patient.to_string(), jittered(g, rng, 1.5 * (1.0 - quality) + 0.3, conf)?));
        }
    }
    let n = spec.size as f64;
    let false_positives = ((1.0 - quality) * 3.0).round() as usize + 1;
    for k in 0..false_positives {
        let slice = (p + k) % spec.slices;
        let conf = rng.random_range(0.72..0.9);
        out.push((patient.to_string(), square(n * 0.15 + 4.0 * k as f64, n * 0.6, 8.0, slice, conf)?));
    }
    // below the confidence threshold; exercises filtering
    out.push((patient.to_string(), square(n * 0.55, n * 0.2, 6.0, 1, 0.4)?));
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Writes the dataset under `dir` and returns the manifest path.
pub fn generate_mini_dataset(dir: &Path, spec: &MiniSpec) -> Result<PathBuf, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::new();
    for p in 0..spec.patients {
        let pid = format!("P{p:03}");
        let sub = dir.join(&pid);
        fs::create_dir_all(&sub).map_err(|e| HarnessError::io(&sub, e))?;
        let lesion = lesion_for(p, spec);
        let k = kspace_from_image(&patient_image(p, &lesion, spec), spec.coils);
        let full = reconstruct(&k, &pid, "reference")?;
        let params = PoissonParams::new(spec.acceleration, 0.08, spec.seed.wrapping_add(p as u64));
        let mask = poisson_mask(k.dims().2, k.dims().3, params)?;
        let zf = zero_fill_recon(&k, &mask)?;
        let scale = 1.0 / full.min_max().1;
        let reference = full.map_values(|_, v| v * scale)?;
        let mut zero_filled = zf.map_values(|_, v| v * scale)?;
        zero_filled.series_id = ZERO_FILLED.into();
        let zf_data = zero_filled.data().as_slice().expect("standard layout").to_vec();
        let mut denoised = reference.map_values(|i, v| 0.8 * v + 0.2 * zf_data[i])?;
        denoised.series_id = DENOISER.into();

        let rel = |name: &str| PathBuf::from(&pid).join(name);
        save_volume(&reference, &dir.join(rel("reference.f32raw")))?;
        save_volume(&zero_filled, &dir.join(rel("zero_filled.f32raw")))?;
        save_volume(&denoised, &dir.join(rel("denoiser.f32raw")))?;

        let gts = lesion_boxes(p, &lesion)?;
        write(
            &dir.join(rel("boxes.xml")),
            &serialize_voc_boxes(&gts, &format!("{pid}.f32raw"), Some((spec.size, spec.size))),
        )?;
        let mut entry = ManifestEntry {
            patient_id: pid.clone(),
            volume_path: rel("reference.f32raw"),
            ground_truth_boxes_path: rel("boxes.xml"),
            predictions_path: Some(rel("pred_fully_sampled.csv")),
            reconstruction_paths: Default::default(),
            reconstruction_predictions_paths: Default::default(),
        };
        for (name, quality) in [(None, 1.0), (Some(ZERO_FILLED), 0.5), (Some(DENOISER), 0.9)] {
            let preds = scripted_predictions(&pid, p, &gts, quality, spec, &mut rng)?;
            let file = format!("pred_{}.csv", name.unwrap_or("fully_sampled"));
            write(&dir.join(rel(&file)), &serialize_predictions(&preds))?;
            if let Some(m) = name {
                entry.reconstruction_paths.insert(m.into(), rel(&format!("{m}.f32raw")));
                entry.reconstruction_predictions_paths.insert(m.into(), rel(&file));
            }
        }
        entries.push(entry);
    }
    let manifest = DatasetManifest {
        entries,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
