//! Whole-volume and box-based reconstruction metrics.
//!
//! `nmse` is reported under the name nRMSE but is the normalized *mean squared*
//! error `sum((test - ref)^2) / sum(ref^2)`; it scales quadratically with the
//! error magnitude. PSNR uses a caller-supplied peak. SSIM is the Gaussian
//! windowed index computed per 2D slice over fully contained windows, then
//! averaged over slices.

use ndarray::{s, ArrayView2};
use serde::Serialize;
use thiserror::Error;

use crate::boxes::Prediction;
use crate::volume::ImageVolume;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: reference {reference:?} vs test {test:?}")]
    DimMismatch {
        reference: (usize, usize, usize),
        test: (usize, usize, usize),
    },
    #[error("reference has zero energy; normalized error is undefined")]
    ZeroReference,
    #[error("volumes are identical; PSNR is infinite")]
    IdenticalVolumes,
    #[error("slice of {rows}x{cols} is smaller than the {window}x{window} SSIM window")]
    SliceTooSmall { rows: usize, cols: usize, window: usize },
    #[error("invalid SSIM parameters: {0}")]
    InvalidParams(String),
    #[error("prediction on slice {slice} but the volume has {n_slices} slices")]
    SliceOutOfRange { slice: usize, n_slices: usize },
    #[error("no prediction reaches the confidence threshold {0}")]
    NoBoxesRetained(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsimParams {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn with_data_range(data_range: f64) -> Self {
        Self {
            data_range,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(MetricError::InvalidParams(format!(
                "window_size must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        for (name, v) in [
            ("gaussian_sigma", self.gaussian_sigma),
            ("k1", self.k1),
            ("k2", self.k2),
            ("data_range", self.data_range),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MetricError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }
}

/// nRMSE, PSNR (dB) and SSIM as fractions. An infinite `psnr` marks
/// identical inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricTriple {
    pub nrmse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

fn check_dims(reference: &ImageVolume, test: &ImageVolume) -> Result<(), MetricError> {
    if reference.dims() != test.dims() {
        return Err(MetricError::DimMismatch {
            reference: reference.dims(),
            test: test.dims(),
        });
    }
    Ok(())
}

fn sums<'a>(
    reference: impl Iterator<Item = &'a f64>,
    test: impl Iterator<Item = &'a f64>,
) -> (f64, f64, usize) {
    let mut err = 0.0;
    let mut energy = 0.0;
    let mut n = 0;
    for (&r, &t) in reference.zip(test) {
        let d = t - r;
        err += d * d;
        energy += r * r;
        n += 1;
    }
    (err, energy, n)
}

fn nmse_from(err: f64, energy: f64) -> Result<f64, MetricError> {
    if energy == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    Ok(err / energy)
}

fn psnr_from(err: f64, n: usize, peak: f64) -> Result<f64, MetricError> {
    if err == 0.0 {
        return Err(MetricError::IdenticalVolumes);
    }
    let mse = err / n as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn nmse(reference: &ImageVolume, test: &ImageVolume) -> Result<f64, MetricError> {
    check_dims(reference, test)?;
    let (err, energy, _) = sums(reference.data().iter(), test.data().iter());
    nmse_from(err, energy)
}

pub fn psnr(reference: &ImageVolume, test: &ImageVolume, peak: f64) -> Result<f64, MetricError> {
    check_dims(reference, test)?;
    let (err, _, n) = sums(reference.data().iter(), test.data().iter());
    psnr_from(err, n, peak)
}

/// PSNR peak used when the caller has none: the reference maximum.
pub fn default_peak(reference: &ImageVolume) -> f64 {
    reference.min_max().1
}

pub fn ssim(reference: &ImageVolume, test: &ImageVolume, params: &SsimParams) -> Result<f64, MetricError> {
    check_dims(reference, test)?;
    params.validate()?;
    let n = reference.n_slices();
    let mut total = 0.0;
    for z in 0..n {
        total += ssim_2d(reference.slice(z), test.slice(z), params)?;
    }
    Ok(total / n as f64)
}

/// Normalized 1D Gaussian taps of odd length `size`.
fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable "valid" correlation of a row-major image with `kernel` on both axes.
fn filter_valid(img: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let out_cols = cols - k + 1;
    let out_rows = rows - k + 1;
    let mut horiz = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let row = &img[r * cols..(r + 1) * cols];
        let dst = &mut horiz[r * out_cols..(r + 1) * out_cols];
        for (c, d) in dst.iter_mut().enumerate() {
            *d = kernel.iter().zip(&row[c..c + k]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for r in 0..out_rows {
        for (i, &w) in kernel.iter().enumerate() {
            let src = &horiz[(r + i) * out_cols..(r + i + 1) * out_cols];
            let dst = &mut out[r * out_cols..(r + 1) * out_cols];
            for (d, v) in dst.iter_mut().zip(src) {
                *d += w * v;
            }
        }
    }
    out
}

/// Mean SSIM of one 2D image pair.
pub fn ssim_2d(a: ArrayView2<f64>, b: ArrayView2<f64>, params: &SsimParams) -> Result<f64, MetricError> {
    let (rows, cols) = a.dim();
    let w = params.window_size;
    if rows < w || cols < w {
        return Err(MetricError::SliceTooSmall { rows, cols, window: w });
    }
    let kernel = gaussian_kernel(w, params.gaussian_sigma);
    let av: Vec<f64> = a.iter().copied().collect();
    let bv: Vec<f64> = b.iter().copied().collect();
    let aa: Vec<f64> = av.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = bv.iter().map(|x| x * x).collect();
    let ab: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(&av, rows, cols, &kernel);
    let mu_b = filter_valid(&bv, rows, cols, &kernel);
    let e_aa = filter_valid(&aa, rows, cols, &kernel);
    let e_bb = filter_valid(&bb, rows, cols, &kernel);
    let e_ab = filter_valid(&ab, rows, cols, &kernel);

    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn volume_metrics(
    reference: &ImageVolume,
    test: &ImageVolume,
    peak: f64,
    params: &SsimParams,
) -> Result<MetricTriple, MetricError> {
    let nrmse = nmse(reference, test)?;
    let psnr = match psnr(reference, test, peak) {
        Ok(v) => v,
        Err(MetricError::IdenticalVolumes) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let ssim = ssim(reference, test, params)?;
    Ok(MetricTriple { nrmse, psnr, ssim })
}

/// Metrics of one slice. `nrmse` is `None` when the reference slice is all zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceMetrics {
    pub slice: usize,
    pub nrmse: Option<f64>,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn slice_metrics(
    reference: &ImageVolume,
    test: &ImageVolume,
    peak: f64,
    params: &SsimParams,
) -> Result<Vec<SliceMetrics>, MetricError> {
    check_dims(reference, test)?;
    params.validate()?;
    (0..reference.n_slices())
        .map(|z| {
            let (r, t) = (reference.slice(z), test.slice(z));
            let (err, energy, n) = sums(r.iter(), t.iter());
            Ok(SliceMetrics {
                slice: z,
                nrmse: nmse_from(err, energy).ok(),
                psnr: psnr_from(err, n, peak).unwrap_or(f64::INFINITY),
                ssim: ssim_2d(r, t, params)?,
            })
        })
        .collect()
}

/// Half-open pixel rectangle `[row0, row1) x [col0, col1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CropRect {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl CropRect {
    /// Floor on the minimum corner, ceil on the maximum corner, clipped to the image.
    pub fn from_box(p: &Prediction, rows: usize, cols: usize) -> Self {
        let b = &p.bbox;
        let lo = |v: f64, max: usize| (v.floor().max(0.0) as usize).min(max);
        let hi = |v: f64, max: usize| (v.ceil().max(0.0) as usize).min(max);
        Self {
            row0: lo(b.y_min, rows),
            row1: hi(b.y_max, rows),
            col0: lo(b.x_min, cols),
            col1: hi(b.x_max, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.row1.saturating_sub(self.row0)
    }

    pub fn cols(&self) -> usize {
        self.col1.saturating_sub(self.col0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRecord {
    #[serde(skip)]
    pub prediction: Prediction,
    pub crop: CropRect,
    pub window_size: usize,
    pub metrics: MetricTriple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedBox {
    pub prediction: Prediction,
    pub reason: String,
}

/// Mean and population standard deviation of a metric column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Infinite entries (identical crops under PSNR) propagate: all-infinite
    /// gives an infinite mean with zero spread.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n_inf = values.iter().filter(|v| v.is_infinite()).count();
        if n_inf == values.len() {
            return Some(Self { mean: values[0], std: 0.0 });
        }
        if n_inf > 0 {
            return Some(Self { mean: f64::INFINITY, std: f64::INFINITY });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TripleSummary {
    pub nrmse: Summary,
    pub psnr: Summary,
    pub ssim: Summary,
}

impl TripleSummary {
    pub fn of(triples: &[MetricTriple]) -> Option<Self> {
        let col = |f: fn(&MetricTriple) -> f64| triples.iter().map(f).collect::<Vec<_>>();
        Some(Self {
            nrmse: Summary::of(&col(|t| t.nrmse))?,
            psnr: Summary::of(&col(|t| t.psnr))?,
            ssim: Summary::of(&col(|t| t.ssim))?,
        })
    }

    pub fn mean(&self) -> MetricTriple {
        MetricTriple {
            nrmse: self.nrmse.mean,
            psnr: self.psnr.mean,
            ssim: self.ssim.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMetricsReport {
    pub records: Vec<BoxRecord>,
    pub skipped: Vec<SkippedBox>,
}

impl BoxMetricsReport {
    /// Means and spreads over the scored boxes; `None` when every retained box was skipped.
    pub fn summary(&self) -> Option<TripleSummary> {
        let triples: Vec<MetricTriple> = self.records.iter().map(|r| r.metrics).collect();
        TripleSummary::of(&triples)
    }

    pub fn skipped_boxes(&self) -> usize {
        self.skipped.len()
    }
}

/// Largest odd window not exceeding `limit` or the configured size.
fn fitted_window(configured: usize, rows: usize, cols: usize) -> Option<usize> {
    let fit = configured.min(rows).min(cols);
    let odd = if fit % 2 == 0 { fit.saturating_sub(1) } else { fit };
    (odd >= 3).then_some(odd)
}

/// Scores one crop. Returns the window used, or a skip reason.
pub fn crop_metrics(
    reference: ArrayView2<f64>,
    test: ArrayView2<f64>,
    peak: f64,
    params: &SsimParams,
) -> Result<(MetricTriple, usize), String> {
    let (rows, cols) = reference.dim();
    let window = fitted_window(params.window_size, rows, cols)
        .ok_or_else(|| format!("crop of {rows}x{cols} is smaller than 3x3"))?;
    let (err, energy, n) = sums(reference.iter(), test.iter());
    let nrmse = nmse_from(err, energy).map_err(|e| e.to_string())?;
    let psnr = psnr_from(err, n, peak).unwrap_or(f64::INFINITY);
    let p = SsimParams {
        window_size: window,
        ..*params
    };
    let ssim = ssim_2d(reference, test, &p).map_err(|e| e.to_string())?;
    Ok((MetricTriple { nrmse, psnr, ssim }, window))
}

/// Crops both volumes to each prediction at or above `confidence_threshold`
/// and scores the crops.
pub fn box_metrics(
    reference: &ImageVolume,
    test: &ImageVolume,
    predictions: &[Prediction],
    confidence_threshold: f64,
    peak: f64,
    params: &SsimParams,
) -> Result<BoxMetricsReport, MetricError> {
    check_dims(reference, test)?;
    params.validate()?;
    let (n_slices, rows, cols) = reference.dims();
    let retained: Vec<&Prediction> = predictions
        .iter()
        .filter(|p| p.confidence >= confidence_threshold)
        .collect();
    if retained.is_empty() {
        return Err(MetricError::NoBoxesRetained(confidence_threshold));
    }
    let mut report = BoxMetricsReport {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    for p in retained {
        let z = p.bbox.slice_index;
        if z >= n_slices {
            return Err(MetricError::SliceOutOfRange { slice: z, n_slices });
        }
        let crop = CropRect::from_box(p, rows, cols);
        let view = s![crop.row0..crop.row1, crop.col0..crop.col1];
        let r = reference.slice(z);
        let t = test.slice(z);
        match crop_metrics(r.slice(view), t.slice(view), peak, params) {
            Ok((metrics, window_size)) => report.records.push(BoxRecord {
                prediction: *p,
                crop,
                window_size,
                metrics,
            }),
            Err(reason) => report.skipped.push(SkippedBox { prediction: *p, reason }),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxes::{BoundingBox, BoxLabel};
    use ndarray::Array3;

    fn vol(data: Array3<f64>) -> ImageVolume {
        ImageVolume::new(data, "p", "s").unwrap()
    }

    fn textured(slices: usize, rows: usize, cols: usize) -> ImageVolume {
        vol(Array3::from_shape_fn((slices, rows, cols), |(z, r, c)| {
            let (r, c) = (r as f64, c as f64);
            5.0 + 2.0 * (0.3 * r).sin() * (0.2 * c).cos() + 0.1 * z as f64 + 0.01 * ((r * 7.0 + c * 3.0) % 11.0)
        }))
    }

    fn pred(x0: f64, y0: f64, x1: f64, y1: f64, slice: usize, conf: f64) -> Prediction {
        Prediction::new(BoundingBox::new(x0, y0, x1, y1, slice, BoxLabel::Anomaly).unwrap(), conf).unwrap()
    }

    #[test]
    fn nmse_identity_and_arithmetic() {
        let r = vol(Array3::from_shape_vec((1, 1, 2), vec![3.0, 4.0]).unwrap());
        let t = vol(Array3::from_shape_vec((1, 1, 2), vec![3.0, 6.0]).unwrap());
        assert_eq!(nmse(&r, &r).unwrap(), 0.0);
        assert!((nmse(&r, &t).unwrap() - 0.16).abs() < 1e-15);
    }

    #[test]
    fn nmse_errors() {
        let z = vol(Array3::zeros((1, 2, 2)));
        let o = vol(Array3::ones((1, 2, 2)));
        assert_eq!(nmse(&z, &o), Err(MetricError::ZeroReference));
        let other = vol(Array3::ones((1, 2, 3)));
        assert!(matches!(nmse(&o, &other), Err(MetricError::DimMismatch { .. })));
    }

    #[test]
    fn nmse_is_quadratic_in_error_scale() {
        let r = textured(2, 16, 16);
        let t1 = r.map_values(|i, v| v + if i % 3 == 0 { 1.0 } else { -1.0 }).unwrap();
        let t2 = r.map_values(|i, v| v + if i % 3 == 0 { 2.0 } else { -2.0 }).unwrap();
        assert_eq!(nmse(&r, &t2).unwrap() / nmse(&r, &t1).unwrap(), 4.0);
    }

    #[test]
    fn psnr_values_at_peak_ten() {
        let r = textured(1, 12, 12);
        let plus_minus = |c: f64| r.map_values(move |i, v| if i % 2 == 0 { v + c } else { v - c }).unwrap();
        assert!((psnr(&r, &plus_minus(2.0), 10.0).unwrap() - 13.9794).abs() < 1e-4);
        assert!((psnr(&r, &plus_minus(0.5), 10.0).unwrap() - 26.0206).abs() < 1e-4);
        assert_eq!(psnr(&r, &r, 10.0), Err(MetricError::IdenticalVolumes));
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let r = textured(2, 20, 24);
        let t = r.map_values(|i, v| v + 0.3 * ((i * 37 % 17) as f64 / 17.0 - 0.5)).unwrap();
        let p = SsimParams::with_data_range(10.0);
        assert!((ssim(&r, &r, &p).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&r, &t, &p).unwrap(), ssim(&t, &r, &p).unwrap());
    }

    #[test]
    fn ssim_constant_slices_closed_form() {
        let a = vol(Array3::from_elem((1, 16, 16), 1.0));
        let b = vol(Array3::from_elem((1, 16, 16), 2.0));
        let p = SsimParams::with_data_range(10.0);
        let expected = 4.01 / 5.01;
        assert!((ssim(&a, &b, &p).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_signed_noise_scores_below_constant_shift() {
        let r = textured(1, 32, 32);
        let noisy = r.map_values(|i, v| v + if (i * 2654435761) % 7 < 3 { 1.0 } else { -1.0 }).unwrap();
        let shifted = r.map_values(|_, v| v + 1.0).unwrap();
        let p = SsimParams::with_data_range(10.0);
        assert!(ssim(&r, &noisy, &p).unwrap() < ssim(&r, &shifted, &p).unwrap());
    }

    #[test]
    fn ssim_rejects_small_slices_and_bad_params() {
        let r = textured(1, 8, 20);
        assert!(matches!(
            ssim(&r, &r, &SsimParams::default()),
            Err(MetricError::SliceTooSmall { rows: 8, .. })
        ));
        let bad = SsimParams { window_size: 4, ..SsimParams::default() };
        assert!(matches!(ssim(&r, &r, &bad), Err(MetricError::InvalidParams(_))));
    }

    #[test]
    fn volume_metrics_identity() {
        let r = textured(2, 16, 16);
        let m = volume_metrics(&r, &r, 10.0, &SsimParams::with_data_range(10.0)).unwrap();
        assert_eq!(m.nrmse, 0.0);
        assert!(m.psnr.is_infinite());
        assert!((m.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_metrics_identity_and_threshold() {
        let r = textured(2, 32, 32);
        let preds = [pred(2.0, 3.0, 20.0, 18.0, 0, 0.9), pred(5.5, 5.5, 27.2, 30.1, 1, 0.8)];
        let rep = box_metrics(&r, &r, &preds, 0.7, 10.0, &SsimParams::with_data_range(10.0)).unwrap();
        let s = rep.summary().unwrap();
        assert!((s.ssim.mean - 1.0).abs() < 1e-12);
        assert_eq!(s.nrmse.mean, 0.0);
        assert_eq!(rep.records[1].crop, CropRect { row0: 5, row1: 31, col0: 5, col1: 28 });

        let low = [pred(2.0, 3.0, 20.0, 18.0, 0, 0.5)];
        assert_eq!(
            box_metrics(&r, &r, &low, 0.7, 10.0, &SsimParams::default()),
            Err(MetricError::NoBoxesRetained(0.7))
        );
    }

    #[test]
    fn box_metrics_mean_of_constant_crops() {
        // Two crops over constant regions: reference 1 everywhere; test 2 in the
        // left half and 1 + x in the right half, chosen for SSIM 0.8 and 0.6.
        let p = SsimParams::with_data_range(10.0);
        let c1 = (0.01f64 * 10.0).powi(2);
        // (2*1*b + c1) / (1 + b^2 + c1) = target  ->  solve the quadratic for b > 1
        let solve = |target: f64| {
            let (a, bq, c) = (target, -2.0, target * (1.0 + c1) - c1);
            (-bq + (bq * bq - 4.0 * a * c).sqrt()) / (2.0 * a)
        };
        let (b8, b6) = (solve(0.8), solve(0.6));
        let r = vol(Array3::from_elem((1, 16, 32), 1.0));
        let t = vol(Array3::from_shape_fn((1, 16, 32), |(_, _, c)| if c < 16 { b8 } else { b6 }));
        let preds = [pred(0.0, 0.0, 16.0, 16.0, 0, 0.95), pred(16.0, 0.0, 32.0, 16.0, 0, 0.9)];
        let rep = box_metrics(&r, &t, &preds, 0.7, 10.0, &p).unwrap();
        assert!((rep.records[0].metrics.ssim - 0.8).abs() < 1e-9);
        assert!((rep.records[1].metrics.ssim - 0.6).abs() < 1e-9);
        assert!((rep.summary().unwrap().ssim.mean - 0.7).abs() < 1e-9);
    }

    #[test]
    fn small_crops_shrink_window_or_skip() {
        let r = textured(1, 32, 32);
        let t = r.map_values(|i, v| v + (i % 5) as f64 * 0.1).unwrap();
        let preds = [pred(0.0, 0.0, 6.0, 8.0, 0, 0.9), pred(0.0, 0.0, 2.0, 9.0, 0, 0.9)];
        let rep = box_metrics(&r, &t, &preds, 0.7, 10.0, &SsimParams::with_data_range(10.0)).unwrap();
        assert_eq!(rep.records.len(), 1);
        assert_eq!(rep.records[0].window_size, 5);
        assert_eq!(rep.skipped_boxes(), 1);
    }

    #[test]
    fn full_slice_box_matches_slice_metrics() {
        let r = textured(3, 24, 28);
        let t = r.map_values(|i, v| v + ((i * 31) % 13) as f64 * 0.05 - 0.3).unwrap();
        let p = SsimParams::with_data_range(10.0);
        let per_slice = slice_metrics(&r, &t, 10.0, &p).unwrap();
        for z in 0..3 {
            let preds = [pred(0.0, 0.0, 28.0, 24.0, z, 1.0)];
            let rep = box_metrics(&r, &t, &preds, 0.7, 10.0, &p).unwrap();
            let m = rep.records[0].metrics;
            assert!((m.ssim - per_slice[z].ssim).abs() < 1e-9);
            assert!((m.psnr - per_slice[z].psnr).abs() < 1e-9);
            assert!((m.nrmse - per_slice[z].nrmse.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_taps_sum_to_one() {
        let k = gaussian_kernel(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
    }
}
