use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::report::sha256_hex;
use super::HarnessError;
use crate::boxes::{group_by_slice, parse_predictions, parse_voc_boxes, Prediction, SliceKey};
use crate::detection::{
    aggregate_scores, match_predictions, mean_average_precision, partition_slices, CountTotals, DetectionScores,
    MatchResult, MatchThresholds, Outcome, SliceData,
};
use crate::manifest::DatasetManifest;
use crate::metrics::{
    box_metrics, default_peak, slice_metrics, volume_metrics, BoxRecord, MetricError, MetricTriple, SliceMetrics,
    SsimParams, TripleSummary,
};
use crate::volume::load_volume;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub thresholds: MatchThresholds,
    /// PSNR peak; `None` uses each reference volume's maximum.
    pub peak: Option<f64>,
    pub ssim: SsimParams,
    pub map_iou_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let thresholds = MatchThresholds::default();
        Self {
            map_iou_thresholds: vec![thresholds.iou],
            thresholds,
            peak: None,
            ssim: SsimParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Reconstruction,
    ZeroFilled,
    FullySampled,
}

impl RowKind {
    /// `None` is the fully sampled reference; a model whose name reads as
    /// "zero filled" in any case or punctuation is the zero-filled baseline.
    pub fn for_model(model: Option<&str>) -> Self {
        match model {
            None => RowKind::FullySampled,
            Some(m) => {
                let norm: String = m.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                if norm.eq_ignore_ascii_case("zerofilled") {
                    RowKind::ZeroFilled
                } else {
                    RowKind::Reconstruction
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Reconstruction => "reconstruction",
            RowKind::ZeroFilled => "zero_filled",
            RowKind::FullySampled => "fully_sampled",
        }
    }
}

impl FromStr for RowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reconstruction" => Ok(RowKind::Reconstruction),
            "zero_filled" => Ok(RowKind::ZeroFilled),
            "fully_sampled" => Ok(RowKind::FullySampled),
            _ => Err(format!("unknown row kind {s:?}")),
        }
    }
}

/// Image metrics summarize per-volume values across patients; box metrics
/// summarize every scored box across the test set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconMetrics {
    pub image: TripleSummary,
    pub boxes: Option<TripleSummary>,
    pub skipped_boxes: usize,
}

/// A scored box together with whether its prediction matched ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxObservation {
    pub patient: String,
    pub outcome: Outcome,
    pub record: BoxRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_name: String,
    pub kind: RowKind,
    pub recon: Option<ReconMetrics>,
    pub detection: DetectionScores,
    pub counts: CountTotals,
    /// sha256 over the hashes of every input file.
    pub provenance: String,
    pub partition: BTreeMap<SliceKey, BTreeSet<Outcome>>,
    pub slice_metrics: BTreeMap<SliceKey, SliceMetrics>,
    pub box_observations: Vec<BoxObservation>,
}

fn file_hash(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Volume payloads are hashed together with their sidecars.
fn volume_hash(path: &Path) -> Result<String, HarnessError> {
    let payload = if path.extension().is_some_and(|e| e == "f32raw") {
        path.to_path_buf()
    } else {
        path.with_extension("f32raw")
    };
    let meta = crate::sidecar::sidecar_path(&payload);
    Ok(sha256_hex(format!("{}{}", file_hash(&payload)?, file_hash(&meta)?).as_bytes()))
}

/// Tags each box as TP when its prediction is among the slice's matches.
fn classify_boxes(patient: &str, records: Vec<BoxRecord>, results: &BTreeMap<SliceKey, MatchResult>) -> Vec<BoxObservation> {
    let mut tp_pool: BTreeMap<usize, Vec<Prediction>> = BTreeMap::new();
    for (key, r) in results.iter().filter(|(k, _)| k.patient == patient) {
        tp_pool.insert(key.slice, r.matches.iter().map(|m| m.prediction).collect());
    }
    records
        .into_iter()
        .map(|record| {
            let pool = tp_pool.entry(record.prediction.bbox.slice_index).or_default();
            let outcome = match pool.iter().position(|p| *p == record.prediction) {
                Some(i) => {
                    pool.swap_remove(i);
                    Outcome::TP
                }
                None => Outcome::FP,
            };
            BoxObservation {
                patient: patient.to_string(),
                outcome,
                record,
            }
        })
        .collect()
}

/// Scores one model (or the fully sampled originals when `model` is
/// `None`) over every manifest entry. All missing files are reported before
/// anything is loaded.
pub fn evaluate_testset(
    manifest: &DatasetManifest,
    model: Option<&str>,
    config: &EvalConfig,
) -> Result<EvalReport, HarnessError> {
    manifest.validate_for_model(model)?;
    config.thresholds.validate()?;
    config.ssim.validate()?;

    let mut provenance_lines = String::new();
    let mut results: BTreeMap<SliceKey, MatchResult> = BTreeMap::new();
    let mut ap_slices = Vec::new();
    let mut per_volume = Vec::new();
    let mut per_slice = BTreeMap::new();
    let mut box_triples = Vec::new();
    let mut skipped = 0;
    let mut observations = Vec::new();

    for entry in &manifest.entries {
        let pid = entry.patient_id.as_str();
        let gt_path = manifest.resolve(&entry.ground_truth_boxes_path);
        let pred_rel = match model {
            None => entry.predictions_path.as_ref().expect("validated"),
            Some(m) => &entry.reconstruction_predictions_paths[m],
        };
        let pred_path = manifest.resolve(pred_rel);
        let vol_path = manifest.resolve(&entry.volume_path);
        provenance_lines.push_str(&format!(
            "{pid} volume {}\n{pid} boxes {}\n{pid} predictions {}\n",
            volume_hash(&vol_path)?,
            file_hash(&gt_path)?,
            file_hash(&pred_path)?
        ));

        let gts = group_by_slice(&parse_voc_boxes(&gt_path)?);
        let preds = parse_predictions(&pred_path)?;
        let foreign = preds.by_slice.keys().filter(|k| k.patient != pid).count();
        if foreign > 0 {
            log::warn!("{}: ignoring {foreign} slices of other patients", pred_path.display());
        }
        let mut slices: BTreeSet<usize> = gts.keys().copied().collect();
        slices.extend(preds.by_slice.keys().filter(|k| k.patient == pid).map(|k| k.slice));
        let mut patient_preds = Vec::new();
        for z in slices {
            let key = SliceKey::new(pid, z);
            let p = preds.slice(&key).to_vec();
            let g = gts.get(&z).cloned().unwrap_or_default();
            results.insert(key.clone(), match_predictions(&p, &g, &config.thresholds));
            patient_preds.extend_from_slice(&p);
            ap_slices.push(SliceData {
                key: Some(key),
                predictions: p,
                ground_truth: g,
            });
        }

        if let Some(m) = model {
            let recon_path = manifest.resolve(&entry.reconstruction_paths[m]);
            provenance_lines.push_str(&format!("{pid} reconstruction {}\n", volume_hash(&recon_path)?));
            let reference = load_volume(&vol_path)?;
            let recon = load_volume(&recon_path)?;
            let peak = config.peak.unwrap_or_else(|| default_peak(&reference));
            per_volume.push(volume_metrics(&reference, &recon, peak, &config.ssim)?);
            for s in slice_metrics(&reference, &recon, peak, &config.ssim)? {
                per_slice.insert(SliceKey::new(pid, s.slice), s);
            }
            match box_metrics(
                &reference,
                &recon,
                &patient_preds,
                config.thresholds.confidence,
                peak,
                &config.ssim,
            ) {
                Ok(report) => {
                    skipped += report.skipped_boxes();
                    box_triples.extend(report.records.iter().map(|r| r.metrics));
                    observations.extend(classify_boxes(pid, report.records, &results));
                }
                Err(MetricError::NoBoxesRetained(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    let (precision, recall, f1, flags, counts) = aggregate_scores(results.values());
    let map = mean_average_precision(&ap_slices, &config.map_iou_thresholds, config.thresholds.boundary)?;
    let recon = model.map(|_| ReconMetrics {
            image: TripleSummary::of(&per_volume).expect("manifest has entries"),
            boxes: TripleSummary::of(&box_triples),
            skipped_boxes: skipped,
        });
    let partition = partition_slices(results.iter());
    Ok(EvalReport {
        model_name: model.unwrap_or("fully_sampled").to_string(),
        kind: RowKind::for_model(model),
        recon,
        detection: DetectionScores {
            precision,
            recall,
            f1,
            map,
            flags,
        },
        counts,
        provenance: sha256_hex(provenance_lines.as_bytes()),
        partition,
        slice_metrics: per_slice,
        box_observations: observations,
    })
}

impl EvalReport {
    /// Per-slice triples with the zero-reference nRMSE slices left out.
    pub fn slice_triples(&self) -> BTreeMap<SliceKey, MetricTriple> {
        self.slice_metrics
            .iter()
            .filter_map(|(k, s)| {
                s.nrmse.map(|nrmse| {
                    (
                        k.clone(),
                        MetricTriple {
                            nrmse,
                            psnr: s.psnr,
                            ssim: s.ssim,
                        },
                    )
                })
            })
            .collect()
    }
}
