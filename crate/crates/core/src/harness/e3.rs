use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::{volume_metrics, MetricTriple, SsimParams, Summary, TripleSummary};
use crate::perturb::{perturb, PerturbationMode, PerturbationSpec};
use crate::stats::{spearman, CorrelationResult, StatsError};
use crate::volume::ImageVolume;

/// Detection columns of one variant, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionColumns {
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E3Row {
    pub label: String,
    pub mode: PerturbationMode,
    pub magnitude: f64,
    /// SSIM as a fraction.
    pub image: TripleSummary,
    pub detection: Option<DetectionColumns>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCorrelation {
    pub mode: PerturbationMode,
    pub recon_metric: &'static str,
    pub detection_metric: &'static str,
    pub result: Result<CorrelationResult, StatsError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E3Report {
    pub rows: Vec<E3Row>,
    pub correlations: Vec<ScenarioCorrelation>,
}

/// Applies every (magnitude, mode) variant to each volume and summarizes
/// the metrics across volumes. Rows run from the largest magnitude down,
/// `Noise` before `Const`. Volume `i` draws its signs from `seed + i`.
pub fn table_e3_experiment(
    volumes: &[ImageVolume],
    magnitudes: &[f64],
    seed: u64,
    peak: f64,
    params: &SsimParams,
    detection: Option<&BTreeMap<String, DetectionColumns>>,
) -> Result<E3Report, HarnessError> {
    if volumes.is_empty() {
        return Err(HarnessError::Invalid("no reference volumes".into()));
    }
    let mut mags = magnitudes.to_vec();
    mags.sort_by(|a, b| b.total_cmp(a));
    if let Some(d) = detection {
        for &c in &mags {
            for mode in [PerturbationMode::Signed, PerturbationMode::Positive] {
                let label = PerturbationSpec::new(c, mode, seed)?.label();
                if !d.contains_key(&label) {
                    return Err(HarnessError::MissingVariant(label));
                }
            }
        }
    }
    let mut rows = Vec::new();
    for &c in &mags {
        for mode in [PerturbationMode::Signed, PerturbationMode::Positive] {
            let label = PerturbationSpec::new(c, mode, seed)?.label();
            let mut triples = Vec::with_capacity(volumes.len());
            for (i, v) in volumes.iter().enumerate() {
                let spec = PerturbationSpec::new(c, mode, seed.wrapping_add(i as u64))?;
                triples.push(volume_metrics(v, &perturb(v, &spec)?, peak, params)?);
            }
            let detection = detection.map(|d| d[&label]);
            rows.push(E3Row {
                label,
                mode,
                magnitude: c,
                image: TripleSummary::of(&triples).expect("at least one volume"),
                detection,
            });
        }
    }
    let correlations = if detection.is_some() { scenario_correlations(&rows) } else { Vec::new() };
    Ok(E3Report { rows, correlations })
}

/// Within each scenario, Spearman between every image metric and every
/// detection metric across magnitudes. Rows without detection columns are
/// ignored.
pub fn scenario_correlations(rows: &[E3Row]) -> Vec<ScenarioCorrelation> {
    let recon: [(&'static str, fn(&MetricTriple) -> f64); 3] =
        [("ssim", |t| t.ssim), ("psnr", |t| t.psnr), ("nrmse", |t| t.nrmse)];
    let det: [(&'static str, fn(&DetectionColumns) -> f64); 4] = [
        ("precision", |d| d.precision),
        ("recall", |d| d.recall),
        ("map", |d| d.map),
        ("f1", |d| d.f1),
    ];
    let mut out = Vec::new();
    for mode in [PerturbationMode::Signed, PerturbationMode::Positive] {
        let mut scenario: Vec<(&E3Row, DetectionColumns)> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .filter_map(|r| r.detection.map(|d| (r, d)))
            .collect();
        scenario.sort_by(|a, b| a.0.magnitude.total_cmp(&b.0.magnitude));
        for &(rname, rget) in &recon {
            let x: Vec<f64> = scenario.iter().map(|(r, _)| rget(&r.image.mean())).collect();
            for &(dname, dget) in &det {
                let y: Vec<f64> = scenario.iter().map(|(_, d)| dget(d)).collect();
                out.push(ScenarioCorrelation {
                    mode,
                    recon_metric: rname,
                    detection_metric: dname,
                    result: spearman(&x, &y),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct E3CsvRow {
    label: String,
    nrmse_mean: f64,
    nrmse_std: f64,
    psnr_mean: f64,
    psnr_std: f64,
    ssim_mean: f64,
    ssim_std: f64,
    precision: Option<f64>,
    recall: Option<f64>,
    map: Option<f64>,
    f1: Option<f64>,
}

fn parse_label(label: &str) -> Result<(PerturbationMode, f64), HarnessError> {
    let bad = || HarnessError::Invalid(format!("unrecognized variant label {label:?}"));
    let (prefix, mag) = label.split_once(" x").ok_or_else(bad)?;
    let mode = match prefix {
        "Noise" => PerturbationMode::Signed,
        "Const" => PerturbationMode::Positive,
        _ => return Err(bad()),
    };
    Ok((mode, mag.parse().map_err(|_| bad())?))
}

/// Reads the report layout written by [`write_e3_csv`]; SSIM in percent.
pub fn read_e3_csv(text: &str) -> Result<Vec<E3Row>, HarnessError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let rec: E3CsvRow = rec?;
        let (mode, magnitude) = parse_label(&rec.label)?;
        let detection = match (rec.precision, rec.recall, rec.map, rec.f1) {
            (Some(precision), Some(recall), Some(map), Some(f1)) => Some(DetectionColumns { precision, recall, map, f1 }),
            (None, None, None, None) => None,
            _ => return Err(HarnessError::Invalid(format!("{}: partial detection columns", rec.label))),
        };
        rows.push(E3Row {
            label: rec.label,
            mode,
            magnitude,
            image: TripleSummary {
                nrmse: Summary {
                    mean: rec.nrmse_mean,
                    std: rec.nrmse_std,
                },
                psnr: Summary {
                    mean: rec.psnr_mean,
                    std: rec.psnr_std,
                },
                ssim: Summary {
                    mean: rec.ssim_mean / 100.0,
                    std: rec.ssim_std / 100.0,
                },
            },
            detection,
        });
    }
    Ok(rows)
}

pub fn write_e3_csv(rows: &[E3Row]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let d = r.detection;
        w.serialize(E3CsvRow {
            label: r.label.clone(),
            nrmse_mean: r.image.nrmse.mean,
            nrmse_std: r.image.nrmse.std,
            psnr_mean: r.image.psnr.mean,
            psnr_std: r.image.psnr.std,
            ssim_mean: 100.0 * r.image.ssim.mean,
            ssim_std: 100.0 * r.image.ssim.std,
            precision: d.map(|d| d.precision),
            recall: d.map(|d| d.recall),
            map: d.map(|d| d.map),
            f1: d.map(|d| d.f1),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
