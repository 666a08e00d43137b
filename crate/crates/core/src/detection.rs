//! Scoring predicted boxes against ground truth.
//!
//! Matching is greedy per slice: predictions are visited by descending
//! confidence and each claims the unmatched ground truth with the highest IoU
//! at or above the threshold (ties go to the lower ground-truth index).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::boxes::{sort_by_confidence, BoundingBox, Prediction, SliceKey};

#[derive(Debug, Error, PartialEq)]
pub enum DetectionError {
    #[error("no ground-truth boxes; average precision is undefined")]
    NoGroundTruth,
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("no IoU thresholds given")]
    NoThresholds,
}

/// Intersection over union of two boxes treated as continuous rectangles.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Whether a value exactly at the threshold passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Boundary {
    #[default]
    Inclusive,
    Exclusive,
}

impl Boundary {
    pub fn passes(self, value: f64, threshold: f64) -> bool {
        match self {
            Boundary::Inclusive => value >= threshold,
            Boundary::Exclusive => value > threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchThresholds {
    pub iou: f64,
    pub confidence: f64,
    pub boundary: Boundary,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        Self {
            iou: 0.2,
            confidence: 0.7,
            boundary: Boundary::Inclusive,
        }
    }
}

impl MatchThresholds {
    pub fn validate(&self) -> Result<(), DetectionError> {
        for t in [self.iou, self.confidence] {
            if !(0.0..=1.0).contains(&t) {
                return Err(DetectionError::BadThreshold(t));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Outcome {
    TP,
    FP,
    FN,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::TP => "TP",
            Outcome::FP => "FP",
            Outcome::FN => "FN",
        })
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TP" => Ok(Outcome::TP),
            "FP" => Ok(Outcome::FP),
            "FN" => Ok(Outcome::FN),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub prediction: Prediction,
    pub ground_truth_index: usize,
    pub iou: f64,
}

/// Outcome of matching the predictions of one slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub matches: Vec<Match>,
    pub false_positives: Vec<Prediction>,
    /// Indices into the ground-truth list that no prediction claimed.
    pub missed: Vec<usize>,
}

impl MatchResult {
    /// The outcome kinds present on this slice.
    pub fn outcomes(&self) -> BTreeSet<Outcome> {
        let mut set = BTreeSet::new();
        if self.tp > 0 {
            set.insert(Outcome::TP);
        }
        if self.fp > 0 {
            set.insert(Outcome::FP);
        }
        if self.fn_ > 0 {
            set.insert(Outcome::FN);
        }
        set
    }
}

/// Index of the unmatched ground truth with the highest passing IoU.
fn best_unmatched(
    pred: &BoundingBox,
    gts: &[BoundingBox],
    taken: &[bool],
    iou_threshold: f64,
    boundary: Boundary,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, gt) in gts.iter().enumerate() {
        if taken[j] {
            continue;
        }
        let v = iou(pred, gt);
        if boundary.passes(v, iou_threshold) && best.is_none_or(|(_, b)| v > b) {
            best = Some((j, v));
        }
    }
    best
}

pub fn match_predictions(
    preds: &[Prediction],
    gts: &[BoundingBox],
    thresholds: &MatchThresholds,
) -> MatchResult {
    let mut retained: Vec<Prediction> = preds
        .iter()
        .filter(|p| thresholds.boundary.passes(p.confidence, thresholds.confidence))
        .copied()
        .collect();
    sort_by_confidence(&mut retained);

    let mut taken = vec![false; gts.len()];
    let mut result = MatchResult::default();
    for p in retained {
        match best_unmatched(&p.bbox, gts, &taken, thresholds.iou, thresholds.boundary) {
            Some((j, v)) => {
                taken[j] = true;
                result.tp += 1;
                result.matches.push(Match {
                    prediction: p,
                    ground_truth_index: j,
                    iou: v,
                });
            }
            None => {
                result.fp += 1;
                result.false_positives.push(p);
            }
        }
    }
    result.missed = (0..gts.len()).filter(|&j| !taken[j]).collect();
    result.fn_ = result.missed.len();
    result
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ScoreFlags {
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

/// Precision, recall, F1 and mAP as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
    pub flags: ScoreFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CountTotals {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Pooled precision/recall/F1. Zero denominators give 0 and set a flag.
pub fn aggregate_scores<'a>(results: impl IntoIterator<Item = &'a MatchResult>) -> (f64, f64, f64, ScoreFlags, CountTotals) {
    let mut totals = CountTotals::default();
    for r in results {
        totals.tp += r.tp;
        totals.fp += r.fp;
        totals.fn_ += r.fn_;
    }
    let mut flags = ScoreFlags::default();
    let ratio = |num: usize, den: usize, flag: &mut bool| {
        if den == 0 {
            *flag = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(totals.tp, totals.tp + totals.fp, &mut flags.precision_undefined);
    let recall = ratio(totals.tp, totals.tp + totals.fn_, &mut flags.recall_undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.f1_undefined = true;
        0.0
    };
    (precision, recall, f1, flags, totals)
}

/// Predictions and ground truth for one slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceData {
    pub key: Option<SliceKey>,
    pub predictions: Vec<Prediction>,
    pub ground_truth: Vec<BoundingBox>,
}

/// One step of the dataset-wide confidence sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub confidence: f64,
    pub is_tp: bool,
    pub cum_tp: usize,
    pub cum_fp: usize,
}

/// Labels every prediction TP/FP in one dataset-wide pass by descending
/// confidence. Equal confidences keep slice order, then in-slice order.
pub fn confidence_sweep(slices: &[SliceData], iou_threshold: f64, boundary: Boundary) -> Vec<SweepPoint> {
    let mut order: Vec<(usize, usize)> = slices
        .iter()
        .enumerate()
        .flat_map(|(s, d)| (0..d.predictions.len()).map(move |i| (s, i)))
        .collect();
    order.sort_by(|&(sa, ia), &(sb, ib)| {
        slices[sb].predictions[ib]
            .confidence
            .total_cmp(&slices[sa].predictions[ia].confidence)
    });
    let mut taken: Vec<Vec<bool>> = slices.iter().map(|d| vec![false; d.ground_truth.len()]).collect();
    let (mut cum_tp, mut cum_fp) = (0, 0);
    order
        .into_iter()
        .map(|(s, i)| {
            let p = &slices[s].predictions[i];
            let hit = best_unmatched(&p.bbox, &slices[s].ground_truth, &taken[s], iou_threshold, boundary);
            if let Some((j, _)) = hit {
                taken[s][j] = true;
                cum_tp += 1;
            } else {
                cum_fp += 1;
            }
            SweepPoint {
                confidence: p.confidence,
                is_tp: hit.is_some(),
                cum_tp,
                cum_fp,
            }
        })
        .collect()
}

/// All-point interpolated average precision over a single class.
pub fn average_precision(slices: &[SliceData], iou_threshold: f64, boundary: Boundary) -> Result<f64, DetectionError> {
    let n_gt: usize = slices.iter().map(|d| d.ground_truth.len()).sum();
    if n_gt == 0 {
        return Err(DetectionError::NoGroundTruth);
    }
    let sweep = confidence_sweep(slices, iou_threshold, boundary);
    let precision: Vec<f64> = sweep
        .iter()
        .map(|p| p.cum_tp as f64 / (p.cum_tp + p.cum_fp) as f64)
        .collect();
    // precision envelope: running max from the end
    let mut envelope = precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    // recall only moves on true positives, by 1/n_gt each time
    let ap: f64 = sweep
        .iter()
        .zip(&envelope)
        .filter(|(p, _)| p.is_tp)
        .map(|(_, &e)| e)
        .sum::<f64>()
        / n_gt as f64;
    Ok(ap)
}

/// AP averaged over several IoU thresholds.
pub fn mean_average_precision(slices: &[SliceData], iou_thresholds: &[f64], boundary: Boundary) -> Result<f64, DetectionError> {
    if iou_thresholds.is_empty() {
        return Err(DetectionError::NoThresholds);
    }
    let mut total = 0.0;
    for &t in iou_thresholds {
        total += average_precision(slices, t, boundary)?;
    }
    Ok(total / iou_thresholds.len() as f64)
}

/// Slice → outcome groups it belongs to. Slices with nothing are absent.
pub fn partition_slices<'a>(
    results: impl IntoIterator<Item = (&'a SliceKey, &'a MatchResult)>,
) -> BTreeMap<SliceKey, BTreeSet<Outcome>> {
    results
        .into_iter()
        .filter_map(|(k, r)| {
            let set = r.outcomes();
            (!set.is_empty()).then(|| (k.clone(), set))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::BoxLabel;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1, 0, BoxLabel::Anomaly).unwrap()
    }

    fn pr(b: BoundingBox, c: f64) -> Prediction {
        Prediction::new(b, c).unwrap()
    }

    #[test]
    fn iou_cases() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &bx(10.0, 0.0, 20.0, 10.0)), 0.0);
        assert!((iou(&a, &bx(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matching_examples() {
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        let t = MatchThresholds::default();
        let r = match_predictions(&[], &[gt], &t);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 1));

        let r = match_predictions(&[pr(gt, 0.9)], &[gt], &t);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 0, 0));

        // IoU 0.5 and 0.4 against the same ground truth
        let p50 = pr(bx(0.0, 0.0, 10.0, 5.0), 0.9);
        let p40 = pr(bx(0.0, 0.0, 10.0, 4.0), 0.8);
        let r = match_predictions(&[p40, p50], &[gt], &t);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 0));
        assert_eq!(r.matches[0].prediction.confidence, 0.9);
        assert!((r.matches[0].iou - 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_semantics() {
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        let p = pr(bx(0.0, 0.0, 10.0, 2.0), 0.7); // IoU exactly 0.2, confidence exactly 0.7
        let inc = match_predictions(&[p], &[gt], &MatchThresholds::default());
        assert_eq!(inc.tp, 1);
        let exc = MatchThresholds { boundary: Boundary::Exclusive, ..Default::default() };
        let r = match_predictions(&[p], &[gt], &exc);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 1));
    }

    #[test]
    fn iou_ties_go_to_lower_index() {
        let gts = [bx(0.0, 0.0, 10.0, 10.0), bx(0.0, 0.0, 10.0, 10.0)];
        let r = match_predictions(&[pr(gts[0], 0.9)], &gts, &MatchThresholds::default());
        assert_eq!(r.matches[0].ground_truth_index, 0);
        assert_eq!(r.missed, vec![1]);
    }

    #[test]
    fn aggregate_examples() {
        let perfect = MatchResult { tp: 3, ..Default::default() };
        let (p, r, f, flags, _) = aggregate_scores([&perfect]);
        assert_eq!((p, r, f), (1.0, 1.0, 1.0));
        assert_eq!(flags, ScoreFlags::default());

        let fp_only = MatchResult { fp: 2, ..Default::default() };
        let (p, r, f, flags, _) = aggregate_scores([&fp_only]);
        assert_eq!((p, r, f), (0.0, 0.0, 0.0));
        assert!(!flags.precision_undefined);
        assert!(flags.recall_undefined && flags.f1_undefined);

        let a = MatchResult { tp: 4, fp: 1, fn_: 2, ..Default::default() };
        let b = MatchResult { tp: 3, fp: 2, fn_: 1, ..Default::default() };
        let (p, r, f, _, totals) = aggregate_scores([&a, &b]);
        assert_eq!((totals.tp, totals.fp, totals.fn_), (7, 3, 3));
        assert!((p - 0.7).abs() < 1e-15 && (r - 0.7).abs() < 1e-15 && (f - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ap_examples() {
        let g1 = bx(0.0, 0.0, 10.0, 10.0);
        let g2 = bx(50.0, 50.0, 60.0, 60.0);
        let one = [SliceData { key: None, predictions: vec![pr(g1, 0.9)], ground_truth: vec![g1] }];
        assert_eq!(average_precision(&one, 0.2, Boundary::Inclusive).unwrap(), 1.0);

        let none = [SliceData { key: None, predictions: vec![], ground_truth: vec![g1] }];
        assert_eq!(average_precision(&none, 0.2, Boundary::Inclusive).unwrap(), 0.0);

        let empty = [SliceData::default()];
        assert_eq!(average_precision(&empty, 0.2, Boundary::Inclusive), Err(DetectionError::NoGroundTruth));

        let three = [SliceData {
            key: None,
            predictions: vec![pr(g1, 0.9), pr(bx(100.0, 100.0, 110.0, 110.0), 0.8), pr(g2, 0.7)],
            ground_truth: vec![g1, g2],
        }];
        let ap = average_precision(&three, 0.2, Boundary::Inclusive).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        let map = mean_average_precision(&three, &[0.2, 0.5], Boundary::Inclusive).unwrap();
        assert!((map - ap).abs() < 1e-15);
    }

    #[test]
    fn partition_examples() {
        let k1 = SliceKey::new("p", 1);
        let k2 = SliceKey::new("p", 2);
        let k3 = SliceKey::new("p", 3);
        let r1 = MatchResult { tp: 1, ..Default::default() };
        let r2 = MatchResult { tp: 1, fn_: 1, ..Default::default() };
        let r3 = MatchResult::default();
        let part = partition_slices([(&k1, &r1), (&k2, &r2), (&k3, &r3)]);
        assert_eq!(part[&k1], BTreeSet::from([Outcome::TP]));
        assert_eq!(part[&k2], BTreeSet::from([Outcome::TP, Outcome::FN]));
        assert!(!part.contains_key(&k3));
    }
}
