use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::evaluate::BoxObservation;
use super::HarnessError;
use crate::boxes::{BoundingBox, BoxLabel, Prediction, SliceKey};
use crate::detection::Outcome;
use crate::metrics::{BoxRecord, CropRect, MetricTriple};

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, HarnessError> {
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize, Deserialize)]
struct PartitionRow {
    patient: String,
    slice: usize,
    /// `;`-separated outcomes, e.g. `TP;FN`.
    outcomes: String,
}

/// `patient,slice,outcomes` with outcomes joined by `;`.
pub fn write_partition_csv(partition: &BTreeMap<SliceKey, BTreeSet<Outcome>>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, outcomes) in partition {
        let list: Vec<String> = outcomes.iter().map(ToString::to_string).collect();
        w.serialize(PartitionRow {
            patient: k.patient.clone(),
            slice: k.slice,
            outcomes: list.join(";"),
        })?;
    }
    finish(w)
}

pub fn read_partition_csv(text: &str) -> Result<BTreeMap<SliceKey, BTreeSet<Outcome>>, HarnessError> {
    let mut out = BTreeMap::new();
    for row in reader(text).deserialize() {
        let row: PartitionRow = row?;
        let outcomes = row
            .outcomes
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<Outcome>().map_err(HarnessError::Invalid))
            .collect::<Result<BTreeSet<_>, _>>()?;
        out.insert(SliceKey::new(row.patient, row.slice), outcomes);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SliceRow {
    patient: String,
    slice: usize,
    nrmse: f64,
    psnr: f64,
    ssim: f64,
}

/// `patient,slice,nrmse,psnr,ssim` with SSIM as a fraction.
pub fn write_slice_metrics_csv(metrics: &BTreeMap<SliceKey, MetricTriple>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, t) in metrics {
        w.serialize(SliceRow {
            patient: k.patient.clone(),
            slice: k.slice,
            nrmse: t.nrmse,
            psnr: t.psnr,
            ssim: t.ssim,
        })?;
    }
    finish(w)
}

pub fn read_slice_metrics_csv(text: &str) -> Result<BTreeMap<SliceKey, MetricTriple>, HarnessError> {
    let mut out = BTreeMap::new();
    for row in reader(text).deserialize() {
        let r: SliceRow = row?;
        out.insert(
            SliceKey::new(r.patient, r.slice),
            MetricTriple {
                nrmse: r.nrmse,
                psnr: r.psnr,
                ssim: r.ssim,
            },
        );
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct BoxRow {
    patient: String,
    slice: usize,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    confidence: f64,
    outcome: String,
    window_size: usize,
    nrmse: f64,
    psnr: f64,
    ssim: f64,
}

/// One row per scored box: geometry, confidence, outcome and crop metrics.
pub fn write_box_observations_csv(obs: &[BoxObservation]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in obs {
        let p = &o.record.prediction;
        w.serialize(BoxRow {
            patient: o.patient.clone(),
            slice: p.bbox.slice_index,
            x_min: p.bbox.x_min,
            y_min: p.bbox.y_min,
            x_max: p.bbox.x_max,
            y_max: p.bbox.y_max,
            confidence: p.confidence,
            outcome: o.outcome.to_string(),
            window_size: o.record.window_size,
            nrmse: o.record.metrics.nrmse,
            psnr: o.record.metrics.psnr,
            ssim: o.record.metrics.ssim,
        })?;
    }
    finish(w)
}

pub fn read_box_observations_csv(text: &str) -> Result<Vec<BoxObservation>, HarnessError> {
    let mut out = Vec::new();
    for row in reader(text).deserialize() {
        let r: BoxRow = row?;
        let bbox = BoundingBox::new(r.x_min, r.y_min, r.x_max, r.y_max, r.slice, BoxLabel::Anomaly)?;
        let prediction = Prediction::new(bbox, r.confidence)?;
        out.push(BoxObservation {
            patient: r.patient,
            outcome: r.outcome.parse().map_err(HarnessError::Invalid)?,
            record: BoxRecord {
                crop: CropRect::from_box(&prediction, usize::MAX, usize::MAX),
                prediction,
                window_size: r.window_size,
                metrics: MetricTriple {
                    nrmse: r.nrmse,
                    psnr: r.psnr,
                    ssim: r.ssim,
                },
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_round_trip() {
        let mut p = BTreeMap::new();
        p.insert(SliceKey::new("a", 1), BTreeSet::from([Outcome::TP, Outcome::FN]));
        p.insert(SliceKey::new("b", 0), BTreeSet::from([Outcome::FP]));
        let text = write_partition_csv(&p).unwrap();
        assert!(text.contains("a,1,TP;FN"));
        assert_eq!(read_partition_csv(&text).unwrap(), p);
    }

    #[test]
    fn slice_metrics_round_trip() {
        let mut m = BTreeMap::new();
        m.insert(SliceKey::new("a", 3), MetricTriple { nrmse: 0.1, psnr: f64::INFINITY, ssim: 0.9 });
        let text = write_slice_metrics_csv(&m).unwrap();
        assert_eq!(read_slice_metrics_csv(&text).unwrap(), m);
    }

    #[test]
    fn box_observations_round_trip() {
        let bbox = BoundingBox::new(1.5, 2.0, 9.0, 7.25, 4, BoxLabel::Anomaly).unwrap();
        let prediction = Prediction::new(bbox, 0.8).unwrap();
        let o = BoxObservation {
            patient: "p".into(),
            outcome: Outcome::FP,
            record: BoxRecord {
                crop: CropRect::from_box(&prediction, usize::MAX, usize::MAX),
                prediction,
                window_size: 5,
                metrics: MetricTriple { nrmse: 0.2, psnr: 30.0, ssim: 0.5 },
            },
        };
        let text = write_box_observations_csv(std::slice::from_ref(&o)).unwrap();
        assert_eq!(read_box_observations_csv(&text).unwrap(), vec![o]);
    }
}
