use recondet_core::normalize::{percentile_range, NormalizationSpec};
use recondet_core::ImageVolume;

/// Display window for a volume: the 1st and 99th percentile intensities.
pub fn display_window(volume: &ImageVolume) -> (f64, f64) {
    let spec = NormalizationSpec {
        lower_percentile: 1.0,
        upper_percentile: 99.0,
        ..NormalizationSpec::default()
    };
    let values: Vec<f64> = volume.data().iter().copied().collect();
    percentile_range(&values, &spec)
}

/// 8-bit grayscale PNG of one slice; values outside `window` saturate.
pub fn render_slice_png(volume: &ImageVolume, slice: usize, window: (f64, f64)) -> Option<Vec<u8>> {
    if slice >= volume.n_slices() {
        return None;
    }
    let view = volume.slice(slice);
    let (rows, cols) = view.dim();
    let (lo, hi) = window;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = view
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, cols as u32, rows as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().ok()?;
    w.write_image_data(&pixels).ok()?;
    w.finish().ok()?;
    Some(out)
}
