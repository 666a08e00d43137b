use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::evaluate::{BoxObservation, RowKind};
use super::report::Table2Row;
use super::{HarnessError, ALPHA};
use crate::boxes::SliceKey;
use crate::detection::Outcome;
use crate::metrics::MetricTriple;
use crate::stats::{one_way_anova, spearman, t_test_two_sample, AnovaResult, CorrelationResult, StatsError, TTestResult, Variance};

pub const MATRIX_LABELS: [&str; 10] = [
    "image_nrmse",
    "image_psnr",
    "image_ssim",
    "box_nrmse",
    "box_psnr",
    "box_ssim",
    "precision",
    "recall",
    "map",
    "f1",
];

fn matrix_values(r: &Table2Row) -> Option<[f64; 10]> {
    Some([
        r.nrmse_mean?,
        r.psnr_mean?,
        r.ssim_mean?,
        r.box_nrmse_mean?,
        r.box_psnr_mean?,
        r.box_ssim_mean?,
        r.precision?,
        r.recall?,
        r.map?,
        r.f1?,
    ])
}

/// Spearman correlations between every pair of Table 2 metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub n: usize,
    cells: Vec<Vec<Result<CorrelationResult, StatsError>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<&Result<CorrelationResult, StatsError>> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(&self.cells[i][j])
    }

    /// Long format: `row,col,r,p_value,n,note`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,r,p_value,n,note\n");
        for (i, a) in self.labels.iter().enumerate() {
            for (j, b) in self.labels.iter().enumerate() {
                match &self.cells[i][j] {
                    Ok(c) => out.push_str(&format!("{a},{b},{:?},{:?},{},\n", c.r, c.p_value, c.n)),
                    Err(e) => out.push_str(&format!("{a},{b},,,{},{e}\n", self.n)),
                }
            }
        }
        out
    }
}

/// Uses only complete rows of kind `reconstruction`: zero-filled and fully
/// sampled rows are left out.
pub fn correlation_matrix(rows: &[Table2Row]) -> Result<CorrelationMatrix, HarnessError> {
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); MATRIX_LABELS.len()];
    for row in rows {
        if row.row_kind()? != RowKind::Reconstruction {
            continue;
        }
        match matrix_values(row) {
            Some(v) => {
                for (c, x) in columns.iter_mut().zip(v) {
                    c.push(x);
                }
            }
            None => log::warn!("row {:?} has missing metrics; left out of the matrix", row.model),
        }
    }
    let n = columns[0].len();
    if n < 4 {
        return Err(HarnessError::InsufficientRows { needed: 4, got: n });
    }
    let cells = columns
        .iter()
        .map(|x| columns.iter().map(|y| spearman(x, y)).collect())
        .collect();
    Ok(CorrelationMatrix {
        labels: MATRIX_LABELS.iter().map(|s| s.to_string()).collect(),
        n,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub outcome: Outcome,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseT {
    pub a: Outcome,
    pub b: Outcome,
    pub test: TTestResult,
    pub significant: bool,
}

/// One metric's TP / FP / FN slice groups.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGroups {
    pub metric: &'static str,
    pub groups: Vec<GroupStats>,
    pub excluded: Vec<(Outcome, String)>,
    /// `Err` carries the reason the test was skipped.
    pub anova: Result<AnovaResult, String>,
    pub pairwise: Vec<Result<PairwiseT, (Outcome, Outcome, String)>>,
}

fn describe(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Compares slice metrics between TP, FP and FN slice groups. A slice with
/// several outcomes counts in each of its groups. Groups with fewer than two
/// finite values are excluded.
pub fn group_analysis(
    partition: &BTreeMap<SliceKey, BTreeSet<Outcome>>,
    metrics: &BTreeMap<SliceKey, MetricTriple>,
) -> Vec<MetricGroups> {
    let pick: [(&'static str, fn(&MetricTriple) -> f64); 3] =
        [("ssim", |t| t.ssim), ("psnr", |t| t.psnr), ("nrmse", |t| t.nrmse)];
    pick.iter()
        .map(|&(name, get)| {
            let mut values: BTreeMap<Outcome, Vec<f64>> = BTreeMap::new();
            for (key, outcomes) in partition {
                let Some(t) = metrics.get(key) else { continue };
                let v = get(t);
                if !v.is_finite() {
                    continue;
                }
                for &o in outcomes {
                    values.entry(o).or_default().push(v);
                }
            }
            let mut excluded = Vec::new();
            let mut kept: Vec<(Outcome, Vec<f64>)> = Vec::new();
            for o in [Outcome::TP, Outcome::FP, Outcome::FN] {
                let v = values.remove(&o).unwrap_or_default();
                if v.len() < 2 {
                    let reason = format!("{} slices", v.len());
                    log::warn!("{name}: {o} group excluded ({reason})");
                    excluded.push((o, reason));
                } else {
                    kept.push((o, v));
                }
            }
            let groups = kept
                .iter()
                .map(|(o, v)| {
                    let (mean, std) = describe(v);
                    GroupStats {
                        outcome: *o,
                        n: v.len(),
                        mean,
                        std,
                    }
                })
                .collect();
            let anova = if kept.len() < 2 {
                Err(format!("{} group(s) with at least two slices", kept.len()))
            } else {
                let refs: Vec<&[f64]> = kept.iter().map(|(_, v)| v.as_slice()).collect();
                one_way_anova(&refs).map_err(|e| e.to_string())
            };
            let mut pairwise = Vec::new();
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    let (a, b) = (kept[i].0, kept[j].0);
                    pairwise.push(
                        t_test_two_sample(&kept[i].1, &kept[j].1, Variance::Pooled)
                            .map(|test| PairwiseT {
                                a,
                                b,
                                significant: test.p_value < ALPHA,
                                test,
                            })
                            .map_err(|e| (a, b, e.to_string())),
                    );
                }
            }
            MetricGroups {
                metric: name,
                groups,
                excluded,
                anova,
                pairwise,
            }
        })
        .collect()
}

/// One cell of the confidence table: `r (p)` for a model, outcome group and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCell {
    pub model: String,
    pub outcome: Outcome,
    pub metric: &'static str,
    pub result: Result<CorrelationResult, StatsError>,
}

/// Spearman between prediction confidence and each box metric, separately
/// for TP and FP boxes, in the order SSIM, PSNR, nRMSE.
pub fn confidence_correlations(model: &str, observations: &[BoxObservation]) -> Vec<ConfidenceCell> {
    let pick: [(&'static str, fn(&MetricTriple) -> f64); 3] =
        [("ssim", |t| t.ssim), ("psnr", |t| t.psnr), ("nrmse", |t| t.nrmse)];
    let mut cells = Vec::new();
    for outcome in [Outcome::TP, Outcome::FP] {
        let group: Vec<&BoxObservation> = observations.iter().filter(|o| o.outcome == outcome).collect();
        for &(metric, get) in &pick {
            let conf: Vec<f64> = group.iter().map(|o| o.record.prediction.confidence).collect();
            let vals: Vec<f64> = group.iter().map(|o| get(&o.record.metrics)).collect();
            cells.push(ConfidenceCell {
                model: model.to_string(),
                outcome,
                metric,
                result: spearman(&conf, &vals),
            });
        }
    }
    cells
}
