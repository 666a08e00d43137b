//! Synthetic multi-coil phantom: Shepp-Logan ellipses with a slowly varying
//! profile along `z`, weighted by smooth complex coil sensitivities.

use ndarray::{Array3, Array4};
use num_complex::Complex64;

use super::{fft_1d_z, fft_2d, MultiCoilKSpace};

/// (intensity, semi-axis a, semi-axis b, center x, center y, rotation degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Real phantom indexed `(x, y, z)`. Ellipses shrink towards the `z` ends.
pub fn shepp_logan(nx: usize, ny: usize, nz: usize) -> Array3<f64> {
    Array3::from_shape_fn((nx, ny, nz), |(ix, iy, iz)| {
        let u = 2.0 * (ix as f64 + 0.5) / nx as f64 - 1.0;
        let v = 2.0 * (iy as f64 + 0.5) / ny as f64 - 1.0;
        let w = if nz > 1 { 2.0 * (iz as f64 + 0.5) / nz as f64 - 1.0 } else { 0.0 };
        let shrink = (1.0 - 0.6 * w * w).sqrt();
        let mut value = 0.0;
        for &(rho, a, b, x0, y0, deg) in &SHEPP_LOGAN {
            let (s, c) = deg.to_radians().sin_cos();
            let (du, dv) = (u - x0 * shrink, v - y0 * shrink);
            let xr = du * c + dv * s;
            let yr = -du * s + dv * c;
            if (xr / (a * shrink)).powi(2) + (yr / (b * shrink)).powi(2) <= 1.0 {
                value += rho;
            }
        }
        value
    })
}

/// Smooth complex sensitivities indexed `(coil, x, y, z)`, coils spread on a
/// ring around the field of view.
pub fn coil_sensitivities(n_coils: usize, nx: usize, ny: usize, nz: usize) -> Array4<Complex64> {
    Array4::from_shape_fn((n_coils, nx, ny, nz), |(c, ix, iy, iz)| {
        let theta = 2.0 * std::f64::consts::PI * c as f64 / n_coils as f64;
        let (cx, cy) = (1.2 * theta.cos(), 1.2 * theta.sin());
        let u = 2.0 * (ix as f64 + 0.5) / nx as f64 - 1.0;
        let v = 2.0 * (iy as f64 + 0.5) / ny as f64 - 1.0;
        let w = 2.0 * (iz as f64 + 0.5) / nz as f64 - 1.0;
        let d2 = (u - cx).powi(2) + (v - cy).powi(2) + 0.25 * w * w;
        let magnitude = (-d2 / (2.0 * 0.9 * 0.9)).exp();
        Complex64::from_polar(magnitude, theta + 0.4 * u - 0.3 * v)
    })
}

/// Fully sampled k-space of the phantom seen through `n_coils` coils.
pub fn phantom_kspace(n_coils: usize, nx: usize, ny: usize, nz: usize) -> MultiCoilKSpace {
    kspace_from_image(&shepp_logan(nx, ny, nz), n_coils)
}

/// Fully sampled k-space of any real `(x, y, z)` image seen through
/// `n_coils` coils.
pub fn kspace_from_image(image: &Array3<f64>, n_coils: usize) -> MultiCoilKSpace {
    let (nx, ny, nz) = image.dim();
    let mut coils = coil_sensitivities(n_coils, nx, ny, nz);
    for mut coil in coils.outer_iter_mut() {
        ndarray::Zip::from(&mut coil).and(image).for_each(|s, &m| *s *= m);
    }
    let k = fft_1d_z(&fft_2d(&coils));
    MultiCoilKSpace::new(k).expect("image values are finite")
}
