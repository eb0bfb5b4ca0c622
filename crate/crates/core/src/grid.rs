//! Space-time discretization of `[0,1]² × [0,1]` and the field containers
//! living on its centered and staggered index spaces.
//!
//! Every tensor is indexed `(time, x, y)`. Densities and multipliers sit on
//! centered points `(i dx, j dy, k dt)`. The x-momentum sits on the faces
//! `((i-½) dx, j dy)` for `i = 0..=n_x` and the y-momentum on
//! `(i dx, (j-½) dy)` for `j = 0..=n_y`; the outermost faces carry zero flux.

use ndarray::{s, Array2, Array3, ArrayView2, Zip};
use num_complex::Complex;

use crate::diffops::{CenteredField, GradientPair};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimeGrid<T> {
    pub n_x: usize,
    pub n_y: usize,
    pub n_t: usize,
    pub dx: T,
    pub dy: T,
    pub dt: T,
}

impl<T: Scalar> SpaceTimeGrid<T> {
    pub fn new(n_x: usize, n_y: usize, n_t: usize) -> Result<Self> {
        if n_x < 2 || n_y < 2 || n_t < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least two points per axis, got ({n_x}, {n_y}, {n_t})"
            )));
        }
        Ok(Self {
            n_x,
            n_y,
            n_t,
            dx: T::one() / T::from_count(n_x - 1),
            dy: T::one() / T::from_count(n_y - 1),
            dt: T::one() / T::from_count(n_t - 1),
        })
    }

    /// Grid whose spatial size matches `img`.
    pub fn for_image(img: &SpatialImage<T>, n_t: usize) -> Result<Self> {
        let (n_x, n_y) = img.dim();
        Self::new(n_x, n_y, n_t)
    }

    pub fn centered_shape(&self) -> (usize, usize, usize) {
        (self.n_t, self.n_x, self.n_y)
    }

    pub fn spatial_shape(&self) -> (usize, usize) {
        (self.n_x, self.n_y)
    }

    /// Volume of one space-time cell, `dx·dy·dt`.
    pub fn cell_volume(&self) -> T {
        self.dx * self.dy * self.dt
    }

    pub fn cell_area(&self) -> T {
        self.dx * self.dy
    }
}

/// Nonnegative space-time density on the centered grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField<T> {
    pub values: Array3<T>,
}

impl<T: Scalar> DensityField<T> {
    pub fn zeros(grid: &SpaceTimeGrid<T>) -> Self {
        Self {
            values: Array3::zeros(grid.centered_shape()),
        }
    }

    pub fn from_array(values: Array3<T>) -> Self {
        Self { values }
    }

    /// Stack holding `img` at every time slice.
    pub fn constant_in_time(img: &SpatialImage<T>, n_t: usize) -> Self {
        let (n_x, n_y) = img.dim();
        let mut values = Array3::zeros((n_t, n_x, n_y));
        for mut slab in values.outer_iter_mut() {
            slab.assign(&img.values);
        }
        Self { values }
    }

    pub fn n_t(&self) -> usize {
        self.values.dim().0
    }

    pub fn slice_view(&self, k: usize) -> ArrayView2<'_, T> {
        self.values.slice(s![k, .., ..])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, &b| a.min(b))
    }
}

/// Momentum on the staggered grids. The outermost faces are pinned to zero
/// by every constructor and every operation that produces one.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumField<T> {
    mx: Array3<T>,
    my: Array3<T>,
}

impl<T: Scalar> MomentumField<T> {
    pub fn zeros(grid: &SpaceTimeGrid<T>) -> Self {
        Self {
            mx: Array3::zeros((grid.n_t, grid.n_x + 1, grid.n_y)),
            my: Array3::zeros((grid.n_t, grid.n_x, grid.n_y + 1)),
        }
    }

    /// Builds a field from raw face arrays; boundary faces are overwritten with zero.
    pub fn from_parts(mx: Array3<T>, my: Array3<T>) -> Result<Self> {
        let (nt, nxp, ny) = mx.dim();
        let expected = vec![nt, nxp.saturating_sub(1), ny + 1];
        if my.dim() != (expected[0], expected[1], expected[2]) || nxp < 2 {
            return Err(Error::ShapeMismatch {
                expected,
                got: my.shape().to_vec(),
            });
        }
        let mut field = Self { mx, my };
        field.pin_boundary();
        Ok(field)
    }

    pub fn mx(&self) -> &Array3<T> {
        &self.mx
    }

    pub fn my(&self) -> &Array3<T> {
        &self.my
    }

    pub fn n_t(&self) -> usize {
        self.mx.dim().0
    }

    /// `(n_x, n_y)` of the centered grid this momentum belongs to.
    pub fn spatial_dim(&self) -> (usize, usize) {
        let (_, nxp, ny) = self.mx.dim();
        (nxp - 1, ny)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Array3<T>, &mut Array3<T>) {
        (&mut self.mx, &mut self.my)
    }

    pub(crate) fn pin_boundary(&mut self) {
        let nx = self.mx.dim().1 - 1;
        let ny = self.my.dim().2 - 1;
        self.mx.slice_mut(s![.., 0, ..]).fill(T::zero());
        self.mx.slice_mut(s![.., nx, ..]).fill(T::zero());
        self.my.slice_mut(s![.., .., 0]).fill(T::zero());
        self.my.slice_mut(s![.., .., ny]).fill(T::zero());
    }

    pub fn boundary_is_zero(&self) -> bool {
        let nx = self.mx.dim().1 - 1;
        let ny = self.my.dim().2 - 1;
        let zero = |v: &T| *v == T::zero();
        self.mx.slice(s![.., 0, ..]).iter().all(zero)
            && self.mx.slice(s![.., nx, ..]).iter().all(zero)
            && self.my.slice(s![.., .., 0]).iter().all(zero)
            && self.my.slice(s![.., .., ny]).iter().all(zero)
    }

    pub fn is_finite(&self) -> bool {
        self.mx.iter().chain(self.my.iter()).all(|v| v.is_finite())
    }

    /// `a·self + b·other`, face by face.
    pub fn lincomb(&self, a: T, other: &Self, b: T) -> Self {
        Self {
            mx: Zip::from(&self.mx).and(&other.mx).map_collect(|&u, &v| a * u + b * v),
            my: Zip::from(&self.my).and(&other.my).map_collect(|&u, &v| a * u + b * v),
        }
    }

    /// Plain sum of entrywise products over both components.
    pub fn dot(&self, other: &Self) -> T {
        dot3(&self.mx, &other.mx) + dot3(&self.my, &other.my)
    }
}

/// A single 2-D image on the spatial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialImage<T> {
    pub values: Array2<T>,
}

impl<T: Scalar> SpatialImage<T> {
    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        Self {
            values: Array2::zeros((n_x, n_y)),
        }
    }

    pub fn from_array(values: Array2<T>) -> Self {
        Self { values }
    }

    pub fn filled(n_x: usize, n_y: usize, v: T) -> Self {
        Self {
            values: Array2::from_elem((n_x, n_y), v),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |a, &b| a.max(b))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, &b| a.min(b))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> T {
        dot2(&self.values, &other.values)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        Zip::from(&self.values)
            .and(&other.values)
            .fold(T::zero(), |acc, &a, &b| acc.max((a - b).abs()))
    }
}

/// Lagrange multipliers of the saddle-point problem: `lambda` for the
/// continuity equation, `eta` for the data term, `zeta` for total variation.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState<T> {
    pub lambda: CenteredField<T>,
    pub eta: Array2<Complex<T>>,
    pub zeta: GradientPair<T>,
}

impl<T: Scalar> DualState<T> {
    pub fn zeros(grid: &SpaceTimeGrid<T>) -> Self {
        Self {
            lambda: CenteredField::zeros(grid),
            eta: Array2::from_elem(grid.spatial_shape(), Complex::new(T::zero(), T::zero())),
            zeta: GradientPair::zeros(grid.n_x, grid.n_y),
        }
    }
}

/// Copies out the image at time index `k`.
pub fn time_slice<T: Scalar>(rho: &DensityField<T>, k: usize) -> Result<SpatialImage<T>> {
    let n_t = rho.n_t();
    if k >= n_t {
        return Err(Error::IndexOutOfRange { index: k, len: n_t });
    }
    Ok(SpatialImage {
        values: rho.values.slice(s![k, .., ..]).to_owned(),
    })
}

/// Writes `img` into time index `k`.
pub fn set_time_slice<T: Scalar>(
    rho: &mut DensityField<T>,
    k: usize,
    img: &SpatialImage<T>,
) -> Result<()> {
    let (n_t, n_x, n_y) = rho.values.dim();
    if k >= n_t {
        return Err(Error::IndexOutOfRange { index: k, len: n_t });
    }
    if img.dim() != (n_x, n_y) {
        return Err(Error::ShapeMismatch {
            expected: vec![n_x, n_y],
            got: img.values.shape().to_vec(),
        });
    }
    rho.values.slice_mut(s![k, .., ..]).assign(&img.values);
    Ok(())
}

/// `Σ img · dx·dy`.
pub fn total_mass<T: Scalar>(img: &SpatialImage<T>, grid: &SpaceTimeGrid<T>) -> T {
    img.sum() * grid.cell_area()
}

pub(crate) fn dot2<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    Zip::from(a).and(b).fold(T::zero(), |acc, &u, &v| acc + u * v)
}

pub(crate) fn dot3<T: Scalar>(a: &Array3<T>, b: &Array3<T>) -> T {
    Zip::from(a).and(b).fold(T::zero(), |acc, &u, &v| acc + u * v)
}
