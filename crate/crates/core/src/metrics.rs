//! PSNR and global-window SSIM.

use ndarray::Zip;

use crate::error::{Error, Result};
use crate::grid::SpatialImage;
use crate::scalar::Scalar;

/// `(0.01)²`, for unit dynamic range.
pub const DEFAULT_C1: f64 = 1e-4;
/// `(0.03)²`, for unit dynamic range.
pub const DEFAULT_C2: f64 = 9e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    /// `+∞` for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
}

fn check_shape<T: Scalar>(u: &SpatialImage<T>, r: &SpatialImage<T>) -> Result<()> {
    if u.dim() != r.dim() {
        return Err(Error::ShapeMismatch {
            expected: r.values.shape().to_vec(),
            got: u.values.shape().to_vec(),
        });
    }
    Ok(())
}

/// `10 log₁₀(N / ‖u − ref‖²)` for a single-channel image of `N` pixels.
pub fn psnr<T: Scalar>(u: &SpatialImage<T>, reference: &SpatialImage<T>) -> Result<f64> {
    check_shape(u, reference)?;
    let err: f64 = Zip::from(&u.values)
        .and(&reference.values)
        .fold(0.0, |acc, &a, &b| acc + (a - b).to_f64_lossy().powi(2));
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (u.values.len() as f64 / err).log10())
}

/// Structural similarity with the whole image as one window and population
/// (divide-by-N) moments.
pub fn ssim<T: Scalar>(u: &SpatialImage<T>, reference: &SpatialImage<T>, c1: f64, c2: f64) -> Result<f64> {
    check_shape(u, reference)?;
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::InvalidArgument("ssim constants must be positive".into()));
    }
    let n = u.values.len() as f64;
    let (mut su, mut sr) = (0.0, 0.0);
    Zip::from(&u.values).and(&reference.values).for_each(|&a, &b| {
        su += a.to_f64_lossy();
        sr += b.to_f64_lossy();
    });
    let (mu, mr) = (su / n, sr / n);
    let (mut vu, mut vr, mut cov) = (0.0, 0.0, 0.0);
    Zip::from(&u.values).and(&reference.values).for_each(|&a, &b| {
        let (da, db) = (a.to_f64_lossy() - mu, b.to_f64_lossy() - mr);
        vu += da * da;
        vr += db * db;
        cov += da * db;
    });
    let (vu, vr, cov) = (vu / n, vr / n, cov / n);
    Ok((2.0 * mu * mr + c1) * (2.0 * cov + c2) / ((mu * mu + mr * mr + c1) * (vu + vr + c2)))
}

pub fn quality<T: Scalar>(u: &SpatialImage<T>, reference: &SpatialImage<T>) -> Result<QualityReport> {
    Ok(QualityReport {
        psnr_db: psnr(u, reference)?,
        ssim: ssim(u, reference, DEFAULT_C1, DEFAULT_C2)?,
    })
}
