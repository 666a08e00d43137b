#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use recondet_core::{save_volume, ImageVolume};
use recondet_reader::{
    router, AppState, BoxMode, CaseDescriptor, CompartmentCalls, Condition, ImageSet, ManualClock, Quota,
    StudyConfig, StudyService, Stratum,
};
use tower::ServiceExt;

pub const WITHOUT: Condition = Condition::new(ImageSet::Reconstructed, BoxMode::WithoutBoxes);
pub const WITH: Condition = Condition::new(ImageSet::Reconstructed, BoxMode::WithBoxes);

pub fn truth_for(i: usize) -> CompartmentCalls {
    CompartmentCalls::new([i % 2 == 0, i % 3 == 0, false, i % 5 == 0, false, i % 7 == 1])
}

/// Writes a study with `tp`/`fp`/`af` cases sharing one small volume pair
/// and prediction file, and returns its config.
pub fn write_study(dir: &Path, readers: &[&str], pool: (usize, usize, usize), washout: u64) -> StudyConfig {
    let vol = ImageVolume::from_vec((4, 16, 16), (0..1024).map(|v| v as f64 / 1024.0).collect(), "p", "ref").unwrap();
    save_volume(&vol, &dir.join("ref.f32raw")).unwrap();
    save_volume(&vol, &dir.join("recon.f32raw")).unwrap();
    std::fs::write(
        dir.join("preds.csv"),
        "patient,slice,x_min,y_min,x_max,y_max,confidence\np,1,2,2,8,8,0.9\np,2,1,1,3,3,0.4\n",
    )
    .unwrap();
    let mut cases = Vec::new();
    let mut n = 0;
    for (count, stratum, tag) in [
        (pool.0, Stratum::TruePositive, "tp"),
        (pool.1, Stratum::FalsePositive, "fp"),
        (pool.2, Stratum::AnomalyFree, "af"),
    ] {
        for i in 0..count {
            cases.push(CaseDescriptor {
                id: format!("{tag}{i:02}"),
                stratum,
                volume_path: "ref.f32raw".into(),
                reconstruction_path: Some("recon.f32raw".into()),
                predictions_path: Some("preds.csv".into()),
                ground_truth: truth_for(n),
            });
            n += 1;
        }
    }
    let cfg = StudyConfig {
        readers: readers.iter().map(|r| r.to_string()).collect(),
        cases,
        conditions: vec![WITHOUT, WITH],
        quota: Quota::default(),
        overlap: 10,
        overlap_case_ids: Vec::new(),
        washout_seconds: washout,
        seed: 11,
        box_confidence_threshold: 0.7,
        ui_dir: None,
        base_dir: dir.to_path_buf(),
    };
    std::fs::write(dir.join("study.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    StudyConfig::load(&dir.join("study.json")).unwrap()
}

pub fn service(cfg: StudyConfig, store: &Path, clock: &ManualClock) -> AppState {
    Arc::new(StudyService::new(cfg, store, Arc::new(clock.clone())).unwrap())
}

pub async fn call(app: &AppState, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub fn submission(reader: &str, case: &str, cond: Condition, calls: CompartmentCalls) -> serde_json::Value {
    serde_json::json!({
        "reader_id": reader,
        "case_id": case,
        "condition": cond,
        "compartments": calls,
    })
}
