//! Undersampled Fourier measurements `K = P ∘ F`: a unitary 2-D DFT followed
//! by a binary frequency mask, plus the radial spoke masks used in the
//! experiments.
//!
//! Frequencies are stored in DFT order (DC at index `(0, 0)`).

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::SpatialImage;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub keep: Array2<bool>,
    pub n_spokes: usize,
    pub rate: f64,
}

impl SamplingMask {
    /// Mask that keeps every frequency.
    pub fn full(n_x: usize, n_y: usize) -> Self {
        Self::from_keep(Array2::from_elem((n_x, n_y), true), 0)
    }

    pub fn from_keep(keep: Array2<bool>, n_spokes: usize) -> Self {
        let count = keep.iter().filter(|&&k| k).count();
        let rate = count as f64 / keep.len() as f64;
        Self {
            keep,
            n_spokes,
            rate,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.keep.dim()
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// `keep[i,j] == keep[-i mod n_x, -j mod n_y]` everywhere.
    pub fn is_centrally_symmetric(&self) -> bool {
        let (nx, ny) = self.dim();
        self.keep
            .indexed_iter()
            .all(|((i, j), &k)| k == self.keep[[(nx - i) % nx, (ny - j) % ny]])
    }

    /// Text form: `mask <n_x> <n_y> <n_spokes> <rate>` then one row of
    /// `'0'/'1'` characters per x index.
    pub fn to_text(&self) -> String {
        let (nx, ny) = self.dim();
        let mut out = String::with_capacity(nx * (ny + 1) + 64);
        writeln!(out, "mask {} {} {} {}", nx, ny, self.n_spokes, self.rate).unwrap();
        for row in self.keep.outer_iter() {
            out.extend(row.iter().map(|&k| if k { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty mask file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "mask" {
            return Err(Error::Parse(format!("bad mask header `{header}`")));
        }
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad integer `{s}` in mask header")))
        };
        let (nx, ny, n_spokes) = (num(parts[1])?, num(parts[2])?, num(parts[3])?);
        let mut keep = Array2::from_elem((nx, ny), false);
        for i in 0..nx {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("mask has {i} rows, expected {nx}")))?;
            let row: Vec<char> = line.trim_end().chars().collect();
            if row.len() != ny {
                return Err(Error::Parse(format!(
                    "mask row {i} has {} columns, expected {ny}",
                    row.len()
                )));
            }
            for (j, c) in row.into_iter().enumerate() {
                keep[[i, j]] = match c {
                    '1' => true,
                    '0' => false,
                    other => return Err(Error::Parse(format!("bad mask character `{other}`"))),
                };
            }
        }
        Ok(Self::from_keep(keep, n_spokes))
    }
}

/// Measured frequencies; entries off the mask are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceData<T> {
    pub values: Array2<Complex<T>>,
    pub mask: SamplingMask,
}

impl<T: Scalar> KSpaceData<T> {
    pub fn zeros(mask: SamplingMask) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            values: Array2::from_elem(mask.dim(), zero),
            mask,
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.values.iter().fold(T::zero(), |a, c| a + c.norm_sqr())
    }

    /// Real part of the complex inner product, `Σ Re(a · conj(b))`.
    pub fn real_dot(&self, other: &Self) -> T {
        Zip::from(&self.values)
            .and(&other.values)
            .fold(T::zero(), |acc, a, b| acc + a.re * b.re + a.im * b.im)
    }
}

/// Angular phase of the first spoke, in units of the spoke spacing `π/n_spokes`.
///
/// With zero phase some spoke counts put a spoke exactly on the lattice
/// diagonal, where only one pixel per row lies within half a pixel of the
/// line; a quarter-step phase keeps every spoke off the lattice axes.
pub const DEFAULT_SPOKE_PHASE: f64 = 0.25;

/// Rasterized equispaced radial spokes with [`DEFAULT_SPOKE_PHASE`].
pub fn make_radial_mask(n_x: usize, n_y: usize, n_spokes: usize) -> Result<SamplingMask> {
    make_radial_mask_with_phase(n_x, n_y, n_spokes, DEFAULT_SPOKE_PHASE)
}

/// Rasterized equispaced radial spokes.
///
/// Spoke `s` has angle `θ = (s + phase)π/n_spokes` and passes through the
/// center of the (shifted) frequency plane. A pixel is kept when its center
/// lies within half a pixel of some spoke. The result is symmetrized under
/// `k ↦ −k` so the unpaired Nyquist row/column of even sizes stays consistent.
pub fn make_radial_mask_with_phase(
    n_x: usize,
    n_y: usize,
    n_spokes: usize,
    phase: f64,
) -> Result<SamplingMask> {
    if n_spokes == 0 {
        return Err(Error::InvalidArgument("n_spokes must be at least 1".into()));
    }
    if n_x < 4 || n_y < 4 {
        return Err(Error::InvalidArgument(format!(
            "mask needs at least 4x4 pixels, got {n_x}x{n_y}"
        )));
    }
    let (cx, cy) = ((n_x / 2) as f64, (n_y / 2) as f64);
    let dirs: Vec<(f64, f64)> = (0..n_spokes)
        .map(|s| {
            let th = (s as f64 + phase) * std::f64::consts::PI / n_spokes as f64;
            (th.cos(), th.sin())
        })
        .collect();
    let mut keep = Array2::from_elem((n_x, n_y), false);
    for a in 0..n_x {
        for b in 0..n_y {
            let (px, py) = (a as f64 - cx, b as f64 - cy);
            // distance to the line spanned by (cos θ, sin θ)
            let hit = dirs
                .iter()
                .any(|&(c, s)| (px * s - py * c).abs() <= 0.5 + 1e-9);
            if hit {
                let i = (a + n_x - n_x / 2) % n_x;
                let j = (b + n_y - n_y / 2) % n_y;
                keep[[i, j]] = true;
            }
        }
    }
    let mirrored = Array2::from_shape_fn((n_x, n_y), |(i, j)| {
        keep[[i, j]] || keep[[(n_x - i) % n_x, (n_y - j) % n_y]]
    });
    Ok(SamplingMask::from_keep(mirrored, n_spokes))
}

/// Cached FFT plans for one image size.
#[derive(Clone)]
pub struct Fourier2<T: Scalar> {
    n_x: usize,
    n_y: usize,
    fwd_x: Arc<dyn Fft<T>>,
    fwd_y: Arc<dyn Fft<T>>,
    inv_x: Arc<dyn Fft<T>>,
    inv_y: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Scalar> Fourier2<T> {
    pub fn new(n_x: usize, n_y: usize) -> Self {
        let mut planner = FftPlanner::<T>::new();
        Self {
            n_x,
            n_y,
            fwd_x: planner.plan_fft_forward(n_x),
            fwd_y: planner.plan_fft_forward(n_y),
            inv_x: planner.plan_fft_inverse(n_x),
            inv_y: planner.plan_fft_inverse(n_y),
            scale: T::one() / T::from_count(n_x * n_y).sqrt(),
        }
    }

    fn transform(&self, data: &mut Array2<Complex<T>>, forward: bool) {
        let (fx, fy) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        // rows are contiguous along y
        for mut row in data.axis_iter_mut(Axis(0)) {
            let mut buf: Vec<Complex<T>> = row.to_vec();
            fy.process(&mut buf);
            row.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
        }
        let mut col = vec![Complex::new(T::zero(), T::zero()); self.n_x];
        for mut c in data.axis_iter_mut(Axis(1)) {
            col.iter_mut().zip(c.iter()).for_each(|(d, v)| *d = *v);
            fx.process(&mut col);
            c.iter_mut().zip(col.iter()).for_each(|(d, v)| *d = *v * self.scale);
        }
    }

    /// Unitary forward DFT of a real image.
    pub fn forward_real(&self, u: &Array2<T>) -> Array2<Complex<T>> {
        assert_eq!(u.dim(), (self.n_x, self.n_y));
        let mut data = u.mapv(|v| Complex::new(v, T::zero()));
        self.transform(&mut data, true);
        data
    }

    /// Unitary inverse DFT.
    pub fn inverse(&self, f: &Array2<Complex<T>>) -> Array2<Complex<T>> {
        assert_eq!(f.dim(), (self.n_x, self.n_y));
        let mut data = f.clone();
        self.transform(&mut data, false);
        data
    }
}

/// `K` and `K^⊺` for a fixed mask with plans built once.
#[derive(Clone)]
pub struct FourierOperator<T: Scalar> {
    fft: Fourier2<T>,
    mask: SamplingMask,
}

impl<T: Scalar> FourierOperator<T> {
    pub fn new(mask: SamplingMask) -> Self {
        let (nx, ny) = mask.dim();
        Self {
            fft: Fourier2::new(nx, ny),
            mask,
        }
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn apply(&self, u: &SpatialImage<T>) -> Result<KSpaceData<T>> {
        if u.dim() != self.mask.dim() {
            let (nx, ny) = self.mask.dim();
            return Err(Error::ShapeMismatch {
                expected: vec![nx, ny],
                got: u.values.shape().to_vec(),
            });
        }
        let mut values = self.fft.forward_real(&u.values);
        let zero = Complex::new(T::zero(), T::zero());
        Zip::from(&mut values)
            .and(&self.mask.keep)
            .for_each(|v, &k| {
                if !k {
                    *v = zero;
                }
            });
        Ok(KSpaceData {
            values,
            mask: self.mask.clone(),
        })
    }

    /// `Re(F⁻¹ f)` after zeroing anything off the mask.
    pub fn adjoint(&self, f: &Array2<Complex<T>>) -> SpatialImage<T> {
        let zero = Complex::new(T::zero(), T::zero());
        let masked = Zip::from(f)
            .and(&self.mask.keep)
            .map_collect(|&v, &k| if k { v } else { zero });
        let inv = self.fft.inverse(&masked);
        SpatialImage {
            values: inv.mapv(|c| c.re),
        }
    }
}

pub fn fourier_forward<T: Scalar>(u: &SpatialImage<T>, mask: &SamplingMask) -> Result<KSpaceData<T>> {
    FourierOperator::new(mask.clone()).apply(u)
}

pub fn fourier_adjoint<T: Scalar>(f: &KSpaceData<T>) -> SpatialImage<T> {
    FourierOperator::new(f.mask.clone()).adjoint(&f.values)
}

/// Inverse transform of the data with unmeasured frequencies left at zero.
pub fn zero_fill_recon<T: Scalar>(f: &KSpaceData<T>) -> SpatialImage<T> {
    fourier_adjoint(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> SpatialImage<f64> {
        SpatialImage::from_array(Array2::from_shape_fn((nx, ny), |_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn single_spoke_is_one_line() {
        let m = make_radial_mask_with_phase(128, 128, 1, 0.0).unwrap();
        assert_eq!(m.count(), 128);
        assert!((m.rate - 128.0 / 16384.0).abs() < 1e-15);
        // θ = 0 runs along the first axis through DC: j = 0 column.
        for i in 0..128 {
            assert!(m.keep[[i, 0]]);
        }
        // Default phase tilts the single spoke onto the diagonal: still one pixel per row.
        let d = make_radial_mask(128, 128, 1).unwrap();
        assert_eq!(d.count(), 128);
        assert!((d.rate - 0.0078125).abs() < 1e-12);
    }

    #[test]
    fn masks_are_symmetric_and_keep_dc() {
        for &(nx, ny) in &[(128, 128), (196, 196), (64, 48), (33, 17)] {
            for s in [1, 2, 5, 10, 15, 30] {
                let m = make_radial_mask(nx, ny, s).unwrap();
                assert!(m.keep[[0, 0]]);
                assert!(m.is_centrally_symmetric(), "{nx}x{ny} {s}");
                assert!(m.rate > 0.0 && m.rate <= 1.0);
            }
        }
    }

    #[test]
    fn mask_guards_and_saturation() {
        assert!(make_radial_mask(128, 128, 0).is_err());
        assert!(make_radial_mask(3, 128, 2).is_err());
        let m = make_radial_mask(8, 8, 400).unwrap();
        assert_eq!(m.rate, 1.0);
    }

    #[test]
    fn mask_text_round_trip() {
        let m = make_radial_mask(20, 12, 3).unwrap();
        let back = SamplingMask::parse(&m.to_text()).unwrap();
        assert_eq!(back.keep, m.keep);
        assert_eq!(back.n_spokes, 3);
        assert!((back.rate - m.rate).abs() < 1e-15);
        assert!(SamplingMask::parse("mask 2 2 1 0.5\n10\n").is_err());
        assert!(SamplingMask::parse("mask 2 2 1 0.5\n10\n0x\n").is_err());
        assert!(SamplingMask::parse("nope\n").is_err());
    }

    #[test]
    fn dft_of_impulse_and_constant() {
        let (nx, ny) = (6, 10);
        let full = SamplingMask::full(nx, ny);
        let mut delta = SpatialImage::zeros(nx, ny);
        delta.values[[0, 0]] = 1.0;
        let f = fourier_forward(&delta, &full).unwrap();
        let c = 1.0 / 60f64.sqrt();
        assert!(f.values.iter().all(|v| (v.re - c).abs() < 1e-14 && v.im.abs() < 1e-14));

        let f = fourier_forward(&SpatialImage::filled(nx, ny, 0.3), &full).unwrap();
        assert!((f.values[[0, 0]].re - 0.3 * 60f64.sqrt()).abs() < 1e-12);
        assert!(f.values.iter().skip(1).all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn parseval_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_image(&mut rng, 12, 9);
        let full = SamplingMask::full(12, 9);
        let f = fourier_forward(&u, &full).unwrap();
        let (a, b) = (f.norm_sqr().sqrt(), u.dot(&u).sqrt());
        assert!((a - b).abs() <= 1e-12 * b);
        let back = zero_fill_recon(&f);
        assert!(back.max_abs_diff(&u) < 1e-12);
        assert!(fourier_adjoint(&KSpaceData::<f64>::zeros(full))
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mask = make_radial_mask(16, 16, 4).unwrap();
        let op = FourierOperator::<f64>::new(mask.clone());
        for _ in 0..20 {
            let u = random_image(&mut rng, 16, 16);
            let mut f = KSpaceData::zeros(mask.clone());
            Zip::from(&mut f.values).and(&mask.keep).for_each(|v, &k| {
                if k {
                    *v = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            });
            let lhs = op.apply(&u).unwrap().real_dot(&f);
            let rhs = u.dot(&op.adjoint(&f.values));
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn dc_only_gives_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_image(&mut rng, 8, 8);
        let mut keep = Array2::from_elem((8, 8), false);
        keep[[0, 0]] = true;
        let rec = zero_fill_recon(&fourier_forward(&u, &SamplingMask::from_keep(keep, 0)).unwrap());
        let mean = u.sum() / 64.0;
        assert!(rec.values.iter().all(|&v| (v - mean).abs() < 1e-12));
    }

    #[test]
    fn k_kt_is_identity_on_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mask = make_radial_mask(16, 12, 3).unwrap();
        let op = FourierOperator::<f64>::new(mask.clone());
        let u = random_image(&mut rng, 16, 12);
        // Data of a real image is Hermitian, which K^⊺ (a real part) preserves.
        let f = op.apply(&u).unwrap();
        let back = op.apply(&op.adjoint(&f.values)).unwrap();
        let err: f64 = Zip::from(&back.values)
            .and(&f.values)
            .fold(0.0, |a, x, y| a + (x - y).norm_sqr());
        assert!(err.sqrt() <= 1e-10 * f.norm_sqr().sqrt());
    }

    #[test]
    fn works_in_single_precision() {
        let u = SpatialImage::<f32>::filled(8, 8, 0.5);
        let f = fourier_forward(&u, &SamplingMask::full(8, 8)).unwrap();
        assert!((f.values[[0, 0]].re - 4.0).abs() < 1e-5);
    }
}
