use std::collections::{BTreeMap, BTreeSet};

use recondet_core::stats::{
    binary_metrics, chi2_contingency, cohens_kappa, BinaryConfusion, BinaryMetrics, Chi2Result, ContingencyTable,
};
use serde::Serialize;
use thiserror::Error;

use crate::config::{BoxMode, Condition, ImageSet};
use crate::response::{CompartmentCalls, ReaderResponse};
use crate::stratify::Assignment;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("responses for cases without ground truth: {}", .0.join(", "))]
    UnknownCases(Vec<String>),
    #[error("responses for conditions outside the study: {}", .0.join(", "))]
    UnknownConditions(Vec<String>),
    #[error("incomplete data:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Incomplete(Vec<IncompleteCase>),
}

/// A reader/case pair missing at least one condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IncompleteCase {
    pub reader_id: String,
    pub case_id: String,
    pub missing: Vec<Condition>,
}

impl std::fmt::Display for IncompleteCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let missing: Vec<String> = self.missing.iter().map(ToString::to_string).collect();
        write!(f, "{} / {}: missing {}", self.reader_id, self.case_id, missing.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairKappa {
    pub reader_a: String,
    pub reader_b: String,
    /// Compartment decisions compared.
    pub n: usize,
    pub kappa: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub confusion: BinaryConfusion,
    pub metrics: Option<BinaryMetrics>,
    pub kappa_pairs: Vec<PairKappa>,
    /// Mean over reader pairs with a defined kappa.
    pub kappa: Option<f64>,
}

/// Without vs with boxes for one image set, rows in that order and columns
/// correct, incorrect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxComparison {
    pub image: &'static str,
    pub table: [[u64; 2]; 2],
    pub chi2: Option<Chi2Result>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table4Row {
    pub metric: &'static str,
    pub without_boxes: Option<f64>,
    pub with_boxes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub conditions: Vec<ConditionReport>,
    pub box_comparisons: Vec<BoxComparison>,
    pub incomplete: Vec<IncompleteCase>,
    /// Reader/case pairs with every condition answered.
    pub complete_cases: usize,
}

fn image_key(i: ImageSet) -> &'static str {
    match i {
        ImageSet::Original => "original",
        ImageSet::Reconstructed => "reconstructed",
    }
}

impl StudyReport {
    pub fn condition(&self, c: Condition) -> Option<&ConditionReport> {
        self.conditions.iter().find(|r| r.condition == c)
    }

    pub fn require_complete(&self) -> Result<(), ReportError> {
        if self.incomplete.is_empty() {
            Ok(())
        } else {
            Err(ReportError::Incomplete(self.incomplete.clone()))
        }
    }

    /// Metric rows against without/with boxes for one image set, performance
    /// values in percent; the last row is the chi² p-value.
    pub fn table4(&self, image: ImageSet) -> Vec<Table4Row> {
        let get = |boxes: BoxMode| self.condition(Condition::new(image, boxes));
        let pct = |boxes: BoxMode, f: fn(&BinaryMetrics) -> Option<f64>| {
            get(boxes).and_then(|r| r.metrics.as_ref()).and_then(f).map(|v| v * 100.0)
        };
        let row = |metric, f: fn(&BinaryMetrics) -> Option<f64>| Table4Row {
            metric,
            without_boxes: pct(BoxMode::WithoutBoxes, f),
            with_boxes: pct(BoxMode::WithBoxes, f),
        };
        let p = self
            .box_comparisons
            .iter()
            .find(|b| b.image == image_key(image))
            .and_then(|b| b.chi2.as_ref())
            .map(|c| c.p_value);
        vec![
            row("Accuracy", |m| Some(m.accuracy)),
            row("Precision", |m| m.precision),
            row("Recall", |m| m.recall),
            row("Specificity", |m| m.specificity),
            row("F1", |m| m.f1),
            Table4Row {
                metric: "Cohen's Kappa",
                without_boxes: get(BoxMode::WithoutBoxes).and_then(|r| r.kappa),
                with_boxes: get(BoxMode::WithBoxes).and_then(|r| r.kappa),
            },
            Table4Row {
                metric: "p-value",
                without_boxes: p,
                with_boxes: p,
            },
        ]
    }
}

/// Compartment-level scoring of reader responses against ground truth.
/// Only reader/case pairs with every study condition answered contribute;
/// the rest are listed in `incomplete`, together with assigned pairs that
/// have no response at all when `assignment` is given.
pub fn compute_study_report(
    responses: &[ReaderResponse],
    truth: &BTreeMap<String, CompartmentCalls>,
    overlap: &[String],
    conditions: &[Condition],
    assignment: Option<&Assignment>,
) -> Result<StudyReport, ReportError> {
    let study: BTreeSet<Condition> = conditions.iter().copied().collect();
    let unknown_cases: BTreeSet<String> = responses
        .iter()
        .filter(|r| !truth.contains_key(&r.case_id))
        .map(|r| r.case_id.clone())
        .collect();
    if !unknown_cases.is_empty() {
        return Err(ReportError::UnknownCases(unknown_cases.into_iter().collect()));
    }
    let unknown_conds: BTreeSet<String> = responses
        .iter()
        .filter(|r| !study.contains(&r.condition))
        .map(|r| r.condition.to_string())
        .collect();
    if !unknown_conds.is_empty() {
        return Err(ReportError::UnknownConditions(unknown_conds.into_iter().collect()));
    }

    let mut by_pair: BTreeMap<(String, String), BTreeMap<Condition, CompartmentCalls>> = BTreeMap::new();
    for r in responses {
        by_pair
            .entry((r.reader_id.clone(), r.case_id.clone()))
            .or_default()
            .insert(r.condition, r.compartments);
    }
    if let Some(a) = assignment {
        for (reader, plans) in &a.readers {
            for p in plans {
                by_pair.entry((reader.clone(), p.case_id.clone())).or_default();
            }
        }
    }
    let mut incomplete = Vec::new();
    let mut complete = BTreeMap::new();
    for (key, calls) in by_pair {
        let missing: Vec<Condition> = conditions.iter().filter(|c| !calls.contains_key(c)).copied().collect();
        if missing.is_empty() {
            complete.insert(key, calls);
        } else {
            incomplete.push(IncompleteCase {
                reader_id: key.0,
                case_id: key.1,
                missing,
            });
        }
    }

    let overlap: BTreeSet<&str> = overlap.iter().map(String::as_str).collect();
    let readers: BTreeSet<&str> = complete.keys().map(|(r, _)| r.as_str()).collect();
    let mut reports = Vec::new();
    for &cond in conditions {
        let mut confusion = BinaryConfusion::default();
        for ((_, case), calls) in &complete {
            let gt = truth[case].as_array();
            for (p, a) in calls[&cond].as_array().into_iter().zip(gt) {
                confusion.record(p, a);
            }
        }
        let metrics = binary_metrics(&confusion).ok();
        let mut kappa_pairs = Vec::new();
        let ordered: Vec<&str> = readers.iter().copied().collect();
        for (i, &a) in ordered.iter().enumerate() {
            for &b in &ordered[i + 1..] {
                let (mut xa, mut xb) = (Vec::new(), Vec::new());
                for &case in &overlap {
                    let ka = (a.to_string(), case.to_string());
                    let kb = (b.to_string(), case.to_string());
                    if let (Some(ca), Some(cb)) = (complete.get(&ka), complete.get(&kb)) {
                        xa.extend(ca[&cond].as_array());
                        xb.extend(cb[&cond].as_array());
                    }
                }
                if xa.is_empty() {
                    continue;
                }
                let (kappa, note) = match cohens_kappa(&xa, &xb) {
                    Ok(k) => (Some(k), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                kappa_pairs.push(PairKappa {
                    reader_a: a.to_string(),
                    reader_b: b.to_string(),
                    n: xa.len(),
                    kappa,
                    note,
                });
            }
        }
        let defined: Vec<f64> = kappa_pairs.iter().filter_map(|p| p.kappa).collect();
        let kappa = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        reports.push(ConditionReport {
            condition: cond,
            confusion,
            metrics,
            kappa_pairs,
            kappa,
        });
    }

    let mut box_comparisons = Vec::new();
    for image in [ImageSet::Original, ImageSet::Reconstructed] {
        let find = |boxes| reports.iter().find(|r| r.condition == Condition::new(image, boxes));
        let (Some(without), Some(with)) = (find(BoxMode::WithoutBoxes), find(BoxMode::WithBoxes)) else {
            continue;
        };
        let row = |c: &BinaryConfusion| [c.tp + c.tn, c.fp + c.fn_];
        let table = [row(&without.confusion), row(&with.confusion)];
        let (chi2, note) = match ContingencyTable::new(table.iter().map(|r| r.to_vec()).collect())
            .and_then(|t| chi2_contingency(&t, true))
        {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        };
        box_comparisons.push(BoxComparison {
            image: image_key(image),
            table,
            chi2,
            note,
        });
    }

    Ok(StudyReport {
        conditions: reports,
        box_comparisons,
        incomplete,
        complete_cases: complete.len(),
    })
}
