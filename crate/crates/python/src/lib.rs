//! Python bindings. Volumes travel as flat C-ordered float lists plus a
//! `(slices, rows, cols)` shape.

use std::fmt::Display;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use recondet_core::detection::{self, Boundary, MatchThresholds, SliceData};
use recondet_core::harness::{self, mini::MiniSpec, EvalConfig};
use recondet_core::kspace::{self, PoissonParams};
use recondet_core::manifest::DatasetManifest;
use recondet_core::metrics::{self, SsimParams};
use recondet_core::perturb::{self, PerturbationMode, PerturbationSpec};
use recondet_core::stats::{self, BinaryConfusion, ContingencyTable, Variance};
use recondet_core::{BoxLabel, ImageVolume};

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "ImageVolume", module = "recondet", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyVolume {
    inner: ImageVolume,
}

#[pymethods]
impl PyVolume {
    #[new]
    #[pyo3(signature = (shape, values, patient_id = "patient".to_string(), series_id = "series".to_string()))]
    fn new(shape: (usize, usize, usize), values: Vec<f64>, patient_id: String, series_id: String) -> PyResult<Self> {
        let inner = ImageVolume::from_vec(shape, values, patient_id, series_id).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = recondet_core::load_volume(&path).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        recondet_core::save_volume(&self.inner, &path).map_err(value_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    #[getter]
    fn patient_id(&self) -> String {
        self.inner.patient_id.clone()
    }

    #[getter]
    fn series_id(&self) -> String {
        self.inner.series_id.clone()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.data().iter().copied().collect()
    }

    fn min_max(&self) -> (f64, f64) {
        self.inner.min_max()
    }

    fn __repr__(&self) -> String {
        let (s, r, c) = self.inner.dims();
        format!("ImageVolume(shape=({s}, {r}, {c}), patient_id={:?})", self.inner.patient_id)
    }
}

#[pyclass(name = "BoundingBox", module = "recondet", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyBox {
    inner: recondet_core::BoundingBox,
}

#[pymethods]
impl PyBox {
    #[new]
    #[pyo3(signature = (x_min, y_min, x_max, y_max, slice_index = 0))]
    fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, slice_index: usize) -> PyResult<Self> {
        let inner = recondet_core::BoundingBox::new(x_min, y_min, x_max, y_max, slice_index, BoxLabel::Anomaly)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn coords(&self) -> (f64, f64, f64, f64) {
        let b = &self.inner;
        (b.x_min, b.y_min, b.x_max, b.y_max)
    }

    #[getter]
    fn slice_index(&self) -> usize {
        self.inner.slice_index
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn iou(&self, other: &PyBox) -> f64 {
        detection::iou(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        let (a, b, c, d) = self.coords();
        format!("BoundingBox({a}, {b}, {c}, {d}, slice_index={})", self.inner.slice_index)
    }
}

#[pyclass(name = "SamplingMask", module = "recondet", frozen)]
pub struct PyMask {
    inner: kspace::SamplingMask,
}

#[pymethods]
impl PyMask {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.dims()
    }

    fn kept_fraction(&self) -> f64 {
        self.inner.kept_fraction()
    }

    fn center_fully_sampled(&self) -> bool {
        self.inner.center_fully_sampled()
    }

    /// Row-major rows of the ky x kz grid.
    fn kept(&self) -> Vec<Vec<bool>> {
        self.inner.kept().outer_iter().map(|row| row.to_vec()).collect()
    }
}

fn ssim_params(data_range: Option<f64>) -> SsimParams {
    data_range.map(SsimParams::with_data_range).unwrap_or_default()
}

#[pyfunction]
fn nmse(reference: &PyVolume, test: &PyVolume) -> PyResult<f64> {
    metrics::nmse(&reference.inner, &test.inner).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (reference, test, peak = None))]
fn psnr(reference: &PyVolume, test: &PyVolume, peak: Option<f64>) -> PyResult<f64> {
    let peak = peak.unwrap_or_else(|| metrics::default_peak(&reference.inner));
    metrics::psnr(&reference.inner, &test.inner, peak).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (reference, test, data_range = None))]
fn ssim(reference: &PyVolume, test: &PyVolume, data_range: Option<f64>) -> PyResult<f64> {
    metrics::ssim(&reference.inner, &test.inner, &ssim_params(data_range)).map_err(value_err)
}

/// `(nrmse, psnr, ssim)`
#[pyfunction]
#[pyo3(signature = (reference, test, peak = None, data_range = None))]
fn volume_metrics(
    reference: &PyVolume,
    test: &PyVolume,
    peak: Option<f64>,
    data_range: Option<f64>,
) -> PyResult<(f64, f64, f64)> {
    let peak = peak.unwrap_or_else(|| metrics::default_peak(&reference.inner));
    let t = metrics::volume_metrics(&reference.inner, &test.inner, peak, &ssim_params(data_range)).map_err(value_err)?;
    Ok((t.nrmse, t.psnr, t.ssim))
}

type PySlice = (Vec<(PyBox, f64)>, Vec<PyBox>);

fn slice_data(slices: Vec<PySlice>) -> PyResult<Vec<SliceData>> {
    slices
        .into_iter()
        .map(|(preds, gts)| {
            let predictions = preds
                .into_iter()
                .map(|(b, c)| recondet_core::Prediction::new(b.inner, c).map_err(value_err))
                .collect::<PyResult<_>>()?;
            Ok(SliceData {
                key: None,
                predictions,
                ground_truth: gts.into_iter().map(|b| b.inner).collect(),
            })
        })
        .collect()
}

/// Each slice is `([(box, confidence), ...], [ground_truth_box, ...])`.
#[pyfunction]
#[pyo3(signature = (slices, iou_threshold = 0.2))]
fn average_precision(slices: Vec<PySlice>, iou_threshold: f64) -> PyResult<f64> {
    detection::average_precision(&slice_data(slices)?, iou_threshold, Boundary::Inclusive).map_err(value_err)
}

/// `(tp, fp, fn)` after greedy matching on one slice.
#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, iou_threshold = 0.2, confidence_threshold = 0.7))]
fn match_counts(
    predictions: Vec<(PyBox, f64)>,
    ground_truth: Vec<PyBox>,
    iou_threshold: f64,
    confidence_threshold: f64,
) -> PyResult<(usize, usize, usize)> {
    let thresholds = MatchThresholds {
        iou: iou_threshold,
        confidence: confidence_threshold,
        ..MatchThresholds::default()
    };
    thresholds.validate().map_err(value_err)?;
    let slice = slice_data(vec![(predictions, ground_truth)])?.remove(0);
    let m = detection::match_predictions(&slice.predictions, &slice.ground_truth, &thresholds);
    Ok((m.tp, m.fp, m.fn_))
}

#[pyfunction]
#[pyo3(signature = (ky, kz, acceleration, center_fraction = 0.05, seed = 0))]
fn poisson_mask(ky: usize, kz: usize, acceleration: f64, center_fraction: f64, seed: u64) -> PyResult<PyMask> {
    let inner = kspace::poisson_mask(ky, kz, PoissonParams::new(acceleration, center_fraction, seed)).map_err(value_err)?;
    Ok(PyMask { inner })
}

fn mode(name: &str) -> PyResult<PerturbationMode> {
    match name.to_ascii_lowercase().as_str() {
        "noise" | "signed" => Ok(PerturbationMode::Signed),
        "const" | "positive" => Ok(PerturbationMode::Positive),
        _ => Err(PyValueError::new_err(format!("unknown perturbation mode {name:?}"))),
    }
}

/// `mode` is "noise" (random sign per pixel) or "const".
#[pyfunction]
#[pyo3(signature = (volume, magnitude, mode = "noise", seed = 0))]
fn perturb_volume(volume: &PyVolume, magnitude: f64, mode: &str, seed: u64) -> PyResult<PyVolume> {
    let spec = PerturbationSpec::new(magnitude, self::mode(mode)?, seed).map_err(value_err)?;
    let inner = perturb::perturb(&volume.inner, &spec).map_err(value_err)?;
    Ok(PyVolume { inner })
}

#[pyfunction]
#[pyo3(signature = (volume, magnitudes, seed = 0))]
fn perturbation_suite(volume: &PyVolume, magnitudes: Vec<f64>, seed: u64) -> PyResult<Vec<(String, PyVolume)>> {
    let suite = perturb::build_suite(&volume.inner, &magnitudes, seed).map_err(value_err)?;
    Ok(suite.into_iter().map(|(label, inner)| (label, PyVolume { inner })).collect())
}

/// `(rho, p_value, n)`
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, usize)> {
    let r = stats::spearman(&x, &y).map_err(value_err)?;
    Ok((r.r, r.p_value, r.n))
}

/// `(F, p_value, df_between, df_within)`
#[pyfunction]
fn one_way_anova(groups: Vec<Vec<f64>>) -> PyResult<(f64, f64, usize, usize)> {
    let refs: Vec<&[f64]> = groups.iter().map(Vec::as_slice).collect();
    let r = stats::one_way_anova(&refs).map_err(value_err)?;
    Ok((r.f, r.p_value, r.df_between, r.df_within))
}

/// `(t, p_value, df)`
#[pyfunction]
#[pyo3(signature = (a, b, welch = false))]
fn t_test(a: Vec<f64>, b: Vec<f64>, welch: bool) -> PyResult<(f64, f64, f64)> {
    let variance = if welch { Variance::Welch } else { Variance::Pooled };
    let r = stats::t_test_two_sample(&a, &b, variance).map_err(value_err)?;
    Ok((r.t, r.p_value, r.df))
}

/// `(chi2, p_value, dof)`
#[pyfunction]
#[pyo3(signature = (table, yates = true))]
fn chi2_contingency(table: Vec<Vec<u64>>, yates: bool) -> PyResult<(f64, f64, usize)> {
    let t = ContingencyTable::new(table).map_err(value_err)?;
    let r = stats::chi2_contingency(&t, yates).map_err(value_err)?;
    Ok((r.chi2, r.p_value, r.dof))
}

#[pyfunction]
fn cohens_kappa(a: Vec<i64>, b: Vec<i64>) -> PyResult<f64> {
    stats::cohens_kappa(&a, &b).map_err(value_err)
}

/// `(accuracy, precision, recall, specificity, f1)`; undefined ratios are `None`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn binary_metrics(
    tp: u64,
    fp: u64,
    tn: u64,
    fn_: u64,
) -> PyResult<(f64, Option<f64>, Option<f64>, Option<f64>, Option<f64>)> {
    let m = stats::binary_metrics(&BinaryConfusion { tp, fp, tn, fn_ }).map_err(value_err)?;
    Ok((m.accuracy, m.precision, m.recall, m.specificity, m.f1))
}

/// Writes a small synthetic dataset and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, patients = None, size = None, slices = None, seed = None))]
fn mini_dataset(
    out_dir: PathBuf,
    patients: Option<usize>,
    size: Option<usize>,
    slices: Option<usize>,
    seed: Option<u64>,
) -> PyResult<PathBuf> {
    let d = MiniSpec::default();
    let spec = MiniSpec {
        patients: patients.unwrap_or(d.patients),
        size: size.unwrap_or(d.size),
        slices: slices.unwrap_or(d.slices),
        seed: seed.unwrap_or(d.seed),
        ..d
    };
    harness::mini::generate_mini_dataset(&out_dir, &spec).map_err(value_err)
}

/// Scores every model in the manifest plus the fully sampled originals and
/// returns the table as CSV text.
#[pyfunction]
#[pyo3(signature = (manifest, models = None, peak = None))]
fn evaluate(manifest: PathBuf, models: Option<Vec<String>>, peak: Option<f64>) -> PyResult<String> {
    let m = DatasetManifest::load(&manifest).map_err(value_err)?;
    let mut names: Vec<Option<String>> = match models {
        Some(list) => list.into_iter().map(Some).collect(),
        None => m.models().into_iter().map(Some).collect(),
    };
    names.push(None);
    let cfg = EvalConfig {
        peak,
        ..EvalConfig::default()
    };
    let reports = names
        .iter()
        .map(|n| harness::evaluate_testset(&m, n.as_deref(), &cfg).map_err(value_err))
        .collect::<PyResult<Vec<_>>>()?;
    harness::write_table2_csv(&reports).map_err(value_err)
}

/// Spearman matrix over a table written by `evaluate`, as CSV text.
#[pyfunction]
fn correlation_matrix(table_csv: &str) -> PyResult<String> {
    let rows = harness::read_table2_csv(table_csv).map_err(value_err)?;
    Ok(harness::correlation_matrix(&rows).map_err(value_err)?.to_csv())
}

#[pymodule]
fn recondet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVolume>()?;
    m.add_class::<PyBox>()?;
    m.add_class::<PyMask>()?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(volume_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(match_counts, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_mask, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_volume, m)?)?;
    m.add_function(wrap_pyfunction!(perturbation_suite, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(one_way_anova, m)?)?;
    m.add_function(wrap_pyfunction!(t_test, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_contingency, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(binary_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(mini_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_matrix, m)?)?;
    Ok(())
}
