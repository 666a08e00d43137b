use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recondet_core::boxes::{serialize_predictions, Prediction, SliceKey};
use recondet_core::detection::Outcome;
use recondet_core::harness::mini::{generate_mini_dataset, MiniSpec, DENOISER, ZERO_FILLED};
use recondet_core::harness::*;
use recondet_core::manifest::DatasetManifest;
use recondet_core::metrics::{BoxRecord, CropRect, MetricTriple, SsimParams};
use recondet_core::perturb::PerturbationMode;
use recondet_core::stats::StatsError;
use recondet_core::{load_volume, BoundingBox, BoxLabel};

const TABLE2: &str = include_str!("../data/table2.csv");
const TABLE_E3: &str = include_str!("../data/table_e3_detection.csv");

fn all_reports(manifest: &DatasetManifest) -> Vec<EvalReport> {
    let cfg = EvalConfig::default();
    let mut out = vec![evaluate_testset(manifest, Some(ZERO_FILLED), &cfg).unwrap()];
    out.push(evaluate_testset(manifest, Some(DENOISER), &cfg).unwrap());
    out.push(evaluate_testset(manifest, None, &cfg).unwrap());
    out
}

#[test]
fn mini_dataset_runs_end_to_end_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = MiniSpec::default();
    let ma = DatasetManifest::load(&generate_mini_dataset(a.path(), &spec).unwrap()).unwrap();
    let mb = DatasetManifest::load(&generate_mini_dataset(b.path(), &spec).unwrap()).unwrap();
    let (ra, rb) = (all_reports(&ma), all_reports(&mb));
    let (ca, cb) = (write_table2_csv(&ra).unwrap(), write_table2_csv(&rb).unwrap());
    assert_eq!(ca, cb);
    assert!(ca.starts_with("# recondet "));

    let rows = read_table2_csv(&ca).unwrap();
    assert_eq!(rows.len(), 3);
    let fully = &rows[2];
    assert_eq!(fully.kind, "fully_sampled");
    assert!(fully.nrmse_mean.is_none() && fully.ssim_mean.is_none() && fully.box_ssim_mean.is_none());
    assert!(fully.precision.is_some() && fully.map.is_some());
    assert_eq!(rows[0].kind, "zero_filled");

    let zf = rows[0].ssim_mean.unwrap();
    let dn = rows[1].ssim_mean.unwrap();
    assert!(zf < dn && dn < 100.0, "zero-filled {zf} vs denoiser {dn}");
    assert_eq!(fully.recall, Some(100.0));
    assert!(rows[0].recall.unwrap() < fully.recall.unwrap());
    assert!(rows[0].box_ssim_mean.is_some());
}

#[test]
fn identity_reconstruction_with_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_mini_dataset(dir.path(), &MiniSpec { patients: 2, ..Default::default() }).unwrap();
    let mut m = DatasetManifest::load(&path).unwrap();
    for e in &mut m.entries {
        let gts = recondet_core::boxes::parse_voc_boxes(&m.base_dir.join(&e.ground_truth_boxes_path)).unwrap();
        let preds: Vec<(String, Prediction)> = gts
            .iter()
            .map(|g| {
                let b = BoundingBox::new(g.x_min, g.y_min, g.x_max, g.y_max, g.slice_index, BoxLabel::Anomaly).unwrap();
                (e.patient_id.clone(), Prediction::new(b, 0.95).unwrap())
            })
            .collect();
        let rel = std::path::PathBuf::from(&e.patient_id).join("pred_identity.csv");
        fs::write(m.base_dir.join(&rel), serialize_predictions(&preds)).unwrap();
        e.reconstruction_paths.insert("identity".into(), e.volume_path.clone());
        e.reconstruction_predictions_paths.insert("identity".into(), rel);
    }
    let r = evaluate_testset(&m, Some("identity"), &EvalConfig::default()).unwrap();
    let recon = r.recon.unwrap();
    assert_eq!(recon.image.ssim.mean, 1.0);
    assert_eq!(recon.image.nrmse.mean, 0.0);
    assert!(recon.image.psnr.mean.is_infinite());
    assert_eq!((r.detection.precision, r.detection.recall, r.detection.map), (1.0, 1.0, 1.0));
    assert!(r.box_observations.iter().all(|o| o.outcome == Outcome::TP));
    assert_eq!(r.kind, RowKind::Reconstruction);
}

#[test]
fn missing_files_enumerated_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate_mini_dataset(dir.path(), &MiniSpec { patients: 2, ..Default::default() }).unwrap();
    let m = DatasetManifest::load(&path).unwrap();
    fs::remove_file(dir.path().join("P000/zero_filled.f32raw")).unwrap();
    fs::remove_file(dir.path().join("P001/pred_zero_filled.csv")).unwrap();
    let err = evaluate_testset(&m, Some(ZERO_FILLED), &EvalConfig::default()).unwrap_err().to_string();
    assert!(err.contains("P000/zero_filled.f32raw") && err.contains("P001/pred_zero_filled.csv"), "{err}");
    assert!(evaluate_testset(&m, Some("nope"), &EvalConfig::default()).is_err());
}

#[test]
fn mini_reference_is_normalized() {
    let dir = tempfile::tempdir().unwrap();
    generate_mini_dataset(dir.path(), &MiniSpec { patients: 1, ..Default::default() }).unwrap();
    let v = load_volume(&dir.path().join("P000/reference.f32raw")).unwrap();
    assert_eq!(v.dims(), (8, 64, 64));
    assert!((v.min_max().1 - 1.0).abs() < 1e-6);
}

fn corr(m: &CorrelationMatrix, a: &str, b: &str) -> (f64, f64) {
    let c = m.get(a, b).unwrap().as_ref().unwrap();
    (c.r, c.p_value)
}

#[test]
fn table2_correlations() {
    let rows = read_table2_csv(TABLE2).unwrap();
    assert_eq!(rows.len(), 16);
    let m = correlation_matrix(&rows).unwrap();
    assert_eq!(m.n, 14);
    let (r, p) = corr(&m, "image_ssim", "map");
    assert!((r - 0.64).abs() <= 0.005 && (p - 0.014).abs() <= 0.003, "{r} {p}");
    let (r, p) = corr(&m, "image_ssim", "f1");
    assert!((r - 0.38).abs() <= 0.005 && (p - 0.18).abs() <= 0.01, "{r} {p}");
    assert!((corr(&m, "box_ssim", "map").0 - 0.81).abs() <= 0.005);
    assert!((corr(&m, "box_ssim", "f1").0 - 0.65).abs() <= 0.005);
    assert!((corr(&m, "box_ssim", "image_ssim").0 - 0.76).abs() <= 0.005);
    assert_eq!(corr(&m, "box_psnr", "image_psnr").0, 1.0);
    // the published nRMSE columns are rounded to two decimals, which leaves ties
    assert!((corr(&m, "box_nrmse", "image_nrmse").0 - 0.96970).abs() < 1e-4);
    assert_eq!(corr(&m, "map", "map").0, 1.0);
    assert_eq!(m.get("map", "f1"), m.get("f1", "map"));
    assert!(m.to_csv().lines().count() == 101);
}

#[test]
fn correlation_matrix_needs_rows() {
    let rows = read_table2_csv(TABLE2).unwrap();
    assert!(matches!(
        correlation_matrix(&rows[..4]),
        Err(HarnessError::InsufficientRows { needed: 4, got: 3 })
    ));
}

fn triple(v: f64) -> MetricTriple {
    MetricTriple { nrmse: v, psnr: v, ssim: v }
}

fn grouped(values: &[(Outcome, f64)]) -> (BTreeMap<SliceKey, BTreeSet<Outcome>>, BTreeMap<SliceKey, MetricTriple>) {
    let mut part = BTreeMap::new();
    let mut metrics = BTreeMap::new();
    for (i, &(o, v)) in values.iter().enumerate() {
        let k = SliceKey::new("p", i);
        part.insert(k.clone(), BTreeSet::from([o]));
        metrics.insert(k, triple(v));
    }
    (part, metrics)
}

#[test]
fn group_analysis_degenerate_and_identical() {
    let (p, m) = grouped(&[(Outcome::TP, 1.0), (Outcome::TP, 2.0), (Outcome::TP, 3.0)]);
    let g = &group_analysis(&p, &m)[0];
    assert!(g.anova.is_err());
    assert_eq!(g.excluded.len(), 2);

    let vals: Vec<(Outcome, f64)> = [Outcome::TP, Outcome::FP, Outcome::FN]
        .iter()
        .flat_map(|&o| [1.0, 2.0, 3.0, 4.0].map(|v| (o, v)))
        .collect();
    let (p, m) = grouped(&vals);
    for g in group_analysis(&p, &m) {
        let a = g.anova.unwrap();
        assert_eq!(a.f, 0.0);
        assert!(g.pairwise.iter().all(|t| !t.as_ref().unwrap().significant));
    }
}

#[test]
fn group_analysis_flags_shifted_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut normal = || {
        // Box-Muller
        let (u, v): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    };
    let mut vals = Vec::new();
    for _ in 0..30 {
        vals.push((Outcome::TP, normal()));
        vals.push((Outcome::FN, normal()));
        vals.push((Outcome::FP, 3.0 + normal()));
    }
    let (p, m) = grouped(&vals);
    let g = &group_analysis(&p, &m)[0];
    assert!(g.anova.as_ref().unwrap().p_value < ALPHA);
    for t in &g.pairwise {
        let t = t.as_ref().unwrap();
        assert_eq!(t.significant, t.a == Outcome::FP || t.b == Outcome::FP, "{t:?}");
    }
}

fn observation(outcome: Outcome, confidence: f64, ssim: f64) -> BoxObservation {
    let b = BoundingBox::new(0.0, 0.0, 4.0, 4.0, 0, BoxLabel::Anomaly).unwrap();
    BoxObservation {
        patient: "p".into(),
        outcome,
        record: BoxRecord {
            prediction: Prediction::new(b, confidence).unwrap(),
            crop: CropRect { row0: 0, row1: 4, col0: 0, col1: 4 },
            window_size: 3,
            metrics: MetricTriple { nrmse: 1.0 - ssim, psnr: 20.0 * ssim, ssim },
        },
    }
}

#[test]
fn confidence_correlation_cases() {
    let obs: Vec<BoxObservation> = (0..6).map(|i| observation(Outcome::TP, 0.8, 0.1 * i as f64)).collect();
    let cells = confidence_correlations("m", &obs);
    assert_eq!(cells.len(), 6);
    assert_eq!(cells[0].result, Err(StatsError::ConstantSeries));
    assert!(matches!(cells[3].result, Err(StatsError::TooFew { .. })));

    let obs: Vec<BoxObservation> = (0..6).map(|i| observation(Outcome::FP, 0.7 + 0.05 * i as f64, 0.7 + 0.05 * i as f64)).collect();
    let cells = confidence_correlations("m", &obs);
    let fp_ssim = cells.iter().find(|c| c.outcome == Outcome::FP && c.metric == "ssim").unwrap();
    assert_eq!(fp_ssim.result.as_ref().unwrap().r, 1.0);
    let fp_nrmse = cells.iter().find(|c| c.outcome == Outcome::FP && c.metric == "nrmse").unwrap();
    assert_eq!(fp_nrmse.result.as_ref().unwrap().r, -1.0);
}

#[test]
fn confidence_correlation_independent_pairs() {
    let mut quiet = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs: Vec<BoxObservation> = (0..200)
            .map(|_| observation(Outcome::TP, rng.random_range(0.7..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let c = confidence_correlations("m", &obs)[0].result.clone().unwrap();
        if c.r.abs() < 0.2 && c.p_value > 0.05 {
            quiet += 1;
        }
    }
    assert!(quiet >= 45, "{quiet}/50");
}

#[test]
fn e3_metrics_only_psnr_column() {
    let data = ndarray::Array3::from_shape_fn((2, 32, 32), |(s, r, c)| {
        5.0 + 2.0 * ((r as f64) / 3.0).sin() * ((c as f64) / 4.0).cos() + s as f64
    });
    let v = recondet_core::ImageVolume::new(data, "p", "ref").unwrap();
    let report = table_e3_experiment(&[v.clone(), v], &[0.5, 1.0, 1.5, 2.0], 7, 10.0, &SsimParams::with_data_range(10.0), None).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels[0], "Noise x2.0");
    assert_eq!(labels[7], "Const x0.5");
    let psnr: Vec<f64> = report.rows.iter().map(|r| r.image.psnr.mean).collect();
    for (pair, want) in psnr.chunks(2).zip([13.98, 16.48, 20.00, 26.02]) {
        assert!((pair[0] - want).abs() < 0.01 && (pair[0] - pair[1]).abs() < 1e-12, "{pair:?}");
    }
    assert!(report.correlations.is_empty());
    let csv = write_e3_csv(&report.rows).unwrap();
    assert_eq!(read_e3_csv(&csv).unwrap().len(), 8);

    let mut det = BTreeMap::new();
    det.insert("Noise x2.0".to_string(), DetectionColumns { precision: 0.0, recall: 0.0, map: 0.0, f1: 0.0 });
    let v = recondet_core::ImageVolume::new(ndarray::Array3::ones((1, 8, 8)), "p", "r").unwrap();
    assert!(matches!(
        table_e3_experiment(&[v], &[2.0], 1, 10.0, &SsimParams::default(), Some(&det)),
        Err(HarnessError::MissingVariant(l)) if l == "Const x2.0"
    ));
}

#[test]
fn e3_fixture_scenario_correlations() {
    let rows = read_e3_csv(TABLE_E3).unwrap();
    let cors = scenario_correlations(&rows);
    for mode in [PerturbationMode::Signed, PerturbationMode::Positive] {
        for det in ["recall", "map", "f1"] {
            let c = cors
                .iter()
                .find(|c| c.mode == mode && c.recon_metric == "ssim" && c.detection_metric == det)
                .unwrap();
            let r = c.result.as_ref().unwrap();
            assert!((r.r - 1.0).abs() < 1e-12 && r.p_value == 0.0);
        }
        let c = cors
            .iter()
            .find(|c| c.mode == mode && c.recon_metric == "ssim" && c.detection_metric == "precision")
            .unwrap();
        let r = c.result.as_ref().unwrap();
        assert!((r.r - 0.4).abs() < 1e-12 && (r.p_value - 0.6).abs() < 0.02, "{r:?}");
    }
}
