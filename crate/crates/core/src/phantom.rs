//! Synthetic test images: the ten-ellipse Shepp–Logan phantom, normalized
//! Gaussian blobs, and smooth mass-preserving template warps.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::grid::SpatialImage;

/// `(intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)`,
/// on `[-1, 1]²` with `x` horizontal and `y` pointing up.
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

/// Phantom-plane coordinates of pixel `(i, j)`: row `i` runs top to bottom,
/// column `j` left to right.
fn pixel_coords(i: usize, j: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let x = (2.0 * j as f64 + 1.0 - nf) / nf;
    let y = (nf - 1.0 - 2.0 * i as f64) / nf;
    (x, y)
}

/// Modified (high-contrast) Shepp–Logan phantom, values in `[0, 1]`.
pub fn shepp_logan<T: Scalar>(n: usize) -> Result<SpatialImage<T>> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!(
            "phantom side must be at least 16, got {n}"
        )));
    }
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = pixel_coords(i, j, n);
        let v: f64 = SHEPP_LOGAN
            .iter()
            .filter(|&&(_, a, b, x0, y0, deg)| {
                let (s, c) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * c + dy * s;
                let w = -dx * s + dy * c;
                (u / a).powi(2) + (w / b).powi(2) <= 1.0
            })
            .map(|e| e.0)
            .sum();
        T::lit(v.clamp(0.0, 1.0))
    });
    Ok(SpatialImage { values })
}

/// Isotropic Gaussian sampled at the grid nodes `(i/(n-1), j/(n-1))` and
/// rescaled so that `Σ u · dx·dy = mass`.
pub fn gaussian_blob<T: Scalar>(
    n: usize,
    center: (f64, f64),
    sigma_g: f64,
    mass: f64,
) -> Result<SpatialImage<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("blob image needs n >= 2".into()));
    }
    if sigma_g <= 0.0 {
        return Err(Error::Precondition("sigma_g must be positive".into()));
    }
    let (cx, cy) = center;
    let margin = 3.0 * sigma_g;
    if cx < margin || cy < margin || cx > 1.0 - margin || cy > 1.0 - margin {
        return Err(Error::Precondition(format!(
            "blob at ({cx}, {cy}) with sigma {sigma_g} is not 3 sigma inside the unit square"
        )));
    }
    let h = 1.0 / (n - 1) as f64;
    let raw = Array2::from_shape_fn((n, n), |(i, j)| {
        let (x, y) = (i as f64 * h, j as f64 * h);
        (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma_g * sigma_g)).exp()
    });
    let scale = mass / (raw.sum() * h * h);
    Ok(SpatialImage {
        values: raw.mapv(|v| T::lit(v * scale)),
    })
}

/// Smooth sinusoidal displacement `d(x, y) = (amp_x sin(2π freq_x y + φx),
/// amp_y sin(2π freq_y x + φy))`. Seed 0 means zero phases; any other seed
/// draws the phases deterministically.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeformationSpec {
    pub amp_x: f64,
    pub amp_y: f64,
    pub freq_x: u32,
    pub freq_y: u32,
    pub seed: u64,
}

impl DeformationSpec {
    pub const MAX_AMPLITUDE: f64 = 0.2;

    pub fn new(amp_x: f64, amp_y: f64, freq_x: u32, freq_y: u32, seed: u64) -> Result<Self> {
        let spec = Self {
            amp_x,
            amp_y,
            freq_x,
            freq_y,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same amplitude and frequency on both axes.
    pub fn uniform(amp: f64, freq: u32) -> Result<Self> {
        Self::new(amp, amp, freq, freq, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amp_x.abs() <= Self::MAX_AMPLITUDE && self.amp_y.abs() <= Self::MAX_AMPLITUDE) {
            return Err(Error::InvalidArgument(format!(
                "warp amplitudes must be at most {} in magnitude, got ({}, {})",
                Self::MAX_AMPLITUDE,
                self.amp_x,
                self.amp_y
            )));
        }
        Ok(())
    }

    fn phases(&self) -> (f64, f64) {
        if self.seed == 0 {
            return (0.0, 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let tau = std::f64::consts::TAU;
        (rng.gen_range(0.0..tau), rng.gen_range(0.0..tau))
    }
}

/// Bilinear sample at fractional indices, clamped to the image.
fn bilinear(u: &Array2<f64>, fi: f64, fj: f64) -> f64 {
    let (nx, ny) = u.dim();
    let fi = fi.clamp(0.0, (nx - 1) as f64);
    let fj = fj.clamp(0.0, (ny - 1) as f64);
    let i0 = (fi.floor() as usize).min(nx - 2);
    let j0 = (fj.floor() as usize).min(ny - 2);
    let (a, b) = (fi - i0 as f64, fj - j0 as f64);
    u[[i0, j0]] * (1.0 - a) * (1.0 - b)
        + u[[i0 + 1, j0]] * a * (1.0 - b)
        + u[[i0, j0 + 1]] * (1.0 - a) * b
        + u[[i0 + 1, j0 + 1]] * a * b
}

/// Backward-warps `u` through the deformation (`out(p) = u(p + d(p))`,
/// bilinear, clamped at the edges) and rescales so the total mass is
/// unchanged.
pub fn warp_template<T: Scalar>(u: &SpatialImage<T>, spec: &DeformationSpec) -> Result<SpatialImage<T>> {
    spec.validate()?;
    let (nx, ny) = u.dim();
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument("image must be at least 2x2".into()));
    }
    if u.min_value() < T::zero() {
        return Err(Error::Precondition("template must be nonnegative".into()));
    }
    let src = u.values.mapv(|v| v.to_f64_lossy());
    let (hx, hy) = (1.0 / (nx - 1) as f64, 1.0 / (ny - 1) as f64);
    let (px, py) = spec.phases();
    let tau = std::f64::consts::TAU;
    let warped = Array2::from_shape_fn((nx, ny), |(i, j)| {
        let (x, y) = (i as f64 * hx, j as f64 * hy);
        let dx = spec.amp_x * (tau * spec.freq_x as f64 * y + px).sin();
        let dy = spec.amp_y * (tau * spec.freq_y as f64 * x + py).sin();
        bilinear(&src, (x + dx) / hx, (y + dy) / hy)
    });
    let before: f64 = src.sum();
    let after: f64 = warped.sum();
    let factor = if after > 0.0 { before / after } else { 1.0 };
    Ok(SpatialImage {
        values: warped.mapv(|v| T::lit(v * factor)),
    })
}

/// Intensity remap `v ↦ v^gamma` (optionally inverted as `1 − v^gamma`)
/// on images in `[0, 1]`, emulating a template from another modality.
pub fn remap_intensity<T: Scalar>(u: &SpatialImage<T>, gamma: f64, invert: bool) -> Result<SpatialImage<T>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    Ok(SpatialImage {
        values: u.values.mapv(|v| {
            let p = v.to_f64_lossy().clamp(0.0, 1.0).powf(gamma);
            T::lit(if invert { 1.0 - p } else { p })
        }),
    })
}
