//! Discrete differential operators on the centered/staggered grids and their
//! exact adjoints under the unweighted entrywise inner product.
//!
//! | operator        | adjoint          |
//! |-----------------|------------------|
//! | [`dt_forward`]  | [`dt_adjoint`]   |
//! | [`divergence`]  | [`div_adjoint`]  |
//! | [`grad_spatial`]| [`grad_adjoint`] |

use ndarray::{s, Array2, Array3, Axis, Zip};

use crate::grid::{dot2, dot3, DensityField, MomentumField, SpaceTimeGrid, SpatialImage};
use crate::scalar::Scalar;

/// Scalar field on the centered space-time grid (time derivatives,
/// divergences, continuity multipliers).
#[derive(Clone, Debug, PartialEq)]
pub struct CenteredField<T> {
    pub values: Array3<T>,
}

impl<T: Scalar> CenteredField<T> {
    pub fn zeros(grid: &SpaceTimeGrid<T>) -> Self {
        Self {
            values: Array3::zeros(grid.centered_shape()),
        }
    }

    pub fn from_array(values: Array3<T>) -> Self {
        Self { values }
    }

    pub fn dot(&self, other: &Self) -> T {
        dot3(&self.values, &other.values)
    }
}

/// Forward-difference spatial gradient of one image. The last row of `gx`
/// and the last column of `gy` are always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair<T> {
    pub gx: Array2<T>,
    pub gy: Array2<T>,
}

impl<T: Scalar> GradientPair<T> {
    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        Self {
            gx: Array2::zeros((n_x, n_y)),
            gy: Array2::zeros((n_x, n_y)),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        dot2(&self.gx, &other.gx) + dot2(&self.gy, &other.gy)
    }

    /// Pointwise Euclidean norm `√(gx² + gy²)`.
    pub fn magnitude(&self) -> Array2<T> {
        Zip::from(&self.gx)
            .and(&self.gy)
            .map_collect(|&a, &b| (a * a + b * b).sqrt())
    }

    /// Isotropic total variation `Σ √(gx² + gy²)` (unweighted).
    pub fn l1_l2_norm(&self) -> T {
        Zip::from(&self.gx)
            .and(&self.gy)
            .fold(T::zero(), |acc, &a, &b| acc + (a * a + b * b).sqrt())
    }
}

/// One-sided differences at both time boundaries, centered in between.
pub fn dt_forward<T: Scalar>(rho: &DensityField<T>, grid: &SpaceTimeGrid<T>) -> CenteredField<T> {
    let r = &rho.values;
    let n_t = r.dim().0;
    let inv = T::one() / grid.dt;
    let half_inv = inv / T::lit(2.0);
    let mut out = Array3::zeros(r.dim());
    for k in 0..n_t {
        let mut o = out.index_axis_mut(Axis(0), k);
        if k == 0 {
            Zip::from(&mut o)
                .and(r.index_axis(Axis(0), 1))
                .and(r.index_axis(Axis(0), 0))
                .for_each(|o, &a, &b| *o = (a - b) * inv);
        } else if k == n_t - 1 {
            Zip::from(&mut o)
                .and(r.index_axis(Axis(0), n_t - 1))
                .and(r.index_axis(Axis(0), n_t - 2))
                .for_each(|o, &a, &b| *o = (a - b) * inv);
        } else {
            Zip::from(&mut o)
                .and(r.index_axis(Axis(0), k + 1))
                .and(r.index_axis(Axis(0), k - 1))
                .for_each(|o, &a, &b| *o = (a - b) * half_inv);
        }
    }
    CenteredField { values: out }
}

/// Transpose of [`dt_forward`]. For `n_t ≥ 4` this is the closed five-case
/// stencil; shorter time axes use the transposed time-derivative matrix.
pub fn dt_adjoint<T: Scalar>(lambda: &CenteredField<T>, grid: &SpaceTimeGrid<T>) -> DensityField<T> {
    let l = &lambda.values;
    let n_t = l.dim().0;
    if n_t < 4 {
        return dt_adjoint_by_matrix(lambda, grid);
    }
    let inv = T::one() / grid.dt;
    let half = T::lit(0.5);
    let half_inv = inv * half;
    let lk = |k: usize| l.index_axis(Axis(0), k);
    let mut out = Array3::zeros(l.dim());
    for k in 0..n_t {
        let mut o = out.index_axis_mut(Axis(0), k);
        match k {
            0 => Zip::from(&mut o)
                .and(lk(1))
                .and(lk(0))
                .for_each(|o, &l1, &l0| *o = (-l1 * half - l0) * inv),
            1 => Zip::from(&mut o)
                .and(lk(2))
                .and(lk(0))
                .for_each(|o, &l2, &l0| *o = (-l2 * half + l0) * inv),
            k if k == n_t - 2 => Zip::from(&mut o)
                .and(lk(n_t - 1))
                .and(lk(n_t - 3))
                .for_each(|o, &a, &b| *o = (-a + b * half) * inv),
            k if k == n_t - 1 => Zip::from(&mut o)
                .and(lk(n_t - 1))
                .and(lk(n_t - 2))
                .for_each(|o, &a, &b| *o = (a + b * half) * inv),
            _ => Zip::from(&mut o)
                .and(lk(k + 1))
                .and(lk(k - 1))
                .for_each(|o, &a, &b| *o = (-a + b) * half_inv),
        }
    }
    DensityField { values: out }
}

/// Row `k` of the time-derivative matrix: `(∂_t ρ)_k = Σ_q D[k][q] ρ_q`.
pub(crate) fn dt_matrix<T: Scalar>(n_t: usize, dt: T) -> Vec<Vec<T>> {
    let inv = T::one() / dt;
    let mut d = vec![vec![T::zero(); n_t]; n_t];
    for (k, row) in d.iter_mut().enumerate() {
        if k == 0 {
            row[1] = row[1] + inv;
            row[0] = row[0] - inv;
        } else if k == n_t - 1 {
            row[n_t - 1] = row[n_t - 1] + inv;
            row[n_t - 2] = row[n_t - 2] - inv;
        } else {
            row[k + 1] = row[k + 1] + inv / T::lit(2.0);
            row[k - 1] = row[k - 1] - inv / T::lit(2.0);
        }
    }
    d
}

fn dt_adjoint_by_matrix<T: Scalar>(
    lambda: &CenteredField<T>,
    grid: &SpaceTimeGrid<T>,
) -> DensityField<T> {
    let l = &lambda.values;
    let n_t = l.dim().0;
    let d = dt_matrix(n_t, grid.dt);
    let mut out = Array3::zeros(l.dim());
    for q in 0..n_t {
        let mut o = out.index_axis_mut(Axis(0), q);
        for (k, row) in d.iter().enumerate() {
            let c = row[q];
            if c != T::zero() {
                Zip::from(&mut o)
                    .and(l.index_axis(Axis(0), k))
                    .for_each(|o, &v| *o = *o + c * v);
            }
        }
    }
    DensityField { values: out }
}

/// Staggered divergence `(mx_{i+½} − mx_{i−½})/dx + (my_{j+½} − my_{j−½})/dy`.
pub fn divergence<T: Scalar>(m: &MomentumField<T>, grid: &SpaceTimeGrid<T>) -> CenteredField<T> {
    let (mx, my) = (m.mx(), m.my());
    let (n_t, nxp, n_y) = mx.dim();
    let n_x = nxp - 1;
    let (ix, iy) = (T::one() / grid.dx, T::one() / grid.dy);
    let mut out = Array3::zeros((n_t, n_x, n_y));
    Zip::from(&mut out)
        .and(mx.slice(s![.., 1.., ..]))
        .and(mx.slice(s![.., ..n_x, ..]))
        .and(my.slice(s![.., .., 1..]))
        .and(my.slice(s![.., .., ..n_y]))
        .for_each(|o, &xp, &xm, &yp, &ym| *o = (xp - xm) * ix + (yp - ym) * iy);
    CenteredField { values: out }
}

/// `div^⊺ λ = −(∂_x λ, ∂_y λ)` on interior faces, zero on boundary faces.
pub fn div_adjoint<T: Scalar>(lambda: &CenteredField<T>, grid: &SpaceTimeGrid<T>) -> MomentumField<T> {
    let l = &lambda.values;
    let (n_t, n_x, n_y) = l.dim();
    let (ix, iy) = (T::one() / grid.dx, T::one() / grid.dy);
    let mut mx = Array3::zeros((n_t, n_x + 1, n_y));
    let mut my = Array3::zeros((n_t, n_x, n_y + 1));
    Zip::from(mx.slice_mut(s![.., 1..n_x, ..]))
        .and(l.slice(s![.., 1.., ..]))
        .and(l.slice(s![.., ..n_x - 1, ..]))
        .for_each(|o, &a, &b| *o = -(a - b) * ix);
    Zip::from(my.slice_mut(s![.., .., 1..n_y]))
        .and(l.slice(s![.., .., 1..]))
        .and(l.slice(s![.., .., ..n_y - 1]))
        .for_each(|o, &a, &b| *o = -(a - b) * iy);
    MomentumField::from_parts(mx, my).expect("shapes built consistently")
}

/// Forward differences, zero on the last row/column.
pub fn grad_spatial<T: Scalar>(u: &SpatialImage<T>, grid: &SpaceTimeGrid<T>) -> GradientPair<T> {
    let v = &u.values;
    let (n_x, n_y) = v.dim();
    let (ix, iy) = (T::one() / grid.dx, T::one() / grid.dy);
    let mut g = GradientPair::zeros(n_x, n_y);
    Zip::from(g.gx.slice_mut(s![..n_x - 1, ..]))
        .and(v.slice(s![1.., ..]))
        .and(v.slice(s![..n_x - 1, ..]))
        .for_each(|o, &a, &b| *o = (a - b) * ix);
    Zip::from(g.gy.slice_mut(s![.., ..n_y - 1]))
        .and(v.slice(s![.., 1..]))
        .and(v.slice(s![.., ..n_y - 1]))
        .for_each(|o, &a, &b| *o = (a - b) * iy);
    g
}

/// Exact transpose of [`grad_spatial`]: a negative backward difference with
/// `ζ[-1] = 0` and the last row/column of `ζ` ignored.
pub fn grad_adjoint<T: Scalar>(zeta: &GradientPair<T>, grid: &SpaceTimeGrid<T>) -> SpatialImage<T> {
    let (n_x, n_y) = zeta.gx.dim();
    let (ix, iy) = (T::one() / grid.dx, T::one() / grid.dy);
    let mut out = Array2::zeros((n_x, n_y));
    // Each forward-difference entry touches two pixels: −ζ/dx at the base, +ζ/dx one step ahead.
    Zip::from(out.slice_mut(s![..n_x - 1, ..]))
        .and(zeta.gx.slice(s![..n_x - 1, ..]))
        .for_each(|o, &z| *o = *o - z * ix);
    Zip::from(out.slice_mut(s![1.., ..]))
        .and(zeta.gx.slice(s![..n_x - 1, ..]))
        .for_each(|o, &z| *o = *o + z * ix);
    Zip::from(out.slice_mut(s![.., ..n_y - 1]))
        .and(zeta.gy.slice(s![.., ..n_y - 1]))
        .for_each(|o, &z| *o = *o - z * iy);
    Zip::from(out.slice_mut(s![.., 1..]))
        .and(zeta.gy.slice(s![.., ..n_y - 1]))
        .for_each(|o, &z| *o = *o + z * iy);
    SpatialImage { values: out }
}

/// Face-to-center average `((mx_{i+½}+mx_{i−½})/2, (my_{j+½}+my_{j−½})/2)`.
pub fn center_average<T: Scalar>(m: &MomentumField<T>) -> (CenteredField<T>, CenteredField<T>) {
    let (mx, my) = (m.mx(), m.my());
    let (n_t, nxp, n_y) = mx.dim();
    let n_x = nxp - 1;
    let half = T::lit(0.5);
    let cx = Zip::from(mx.slice(s![.., 1.., ..]))
        .and(mx.slice(s![.., ..n_x, ..]))
        .map_collect(|&a, &b| (a + b) * half);
    let cy = Zip::from(my.slice(s![.., .., 1..]))
        .and(my.slice(s![.., .., ..n_y]))
        .map_collect(|&a, &b| (a + b) * half);
    debug_assert_eq!(cx.dim(), (n_t, n_x, n_y));
    (CenteredField { values: cx }, CenteredField { values: cy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::time_slice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand3(rng: &mut ChaCha8Rng, d: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0))
    }

    fn rand_momentum(rng: &mut ChaCha8Rng, g: &SpaceTimeGrid<f64>) -> MomentumField<f64> {
        MomentumField::from_parts(
            rand3(rng, (g.n_t, g.n_x + 1, g.n_y)),
            rand3(rng, (g.n_t, g.n_x, g.n_y + 1)),
        )
        .unwrap()
    }

    fn rel_defect(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + a.abs())
    }

    #[test]
    fn dt_forward_constant_and_ramp() {
        let g = SpaceTimeGrid::<f64>::new(4, 3, 6).unwrap();
        let rho = DensityField::from_array(Array3::from_shape_fn((6, 4, 3), |(_, i, j)| {
            (i * 3 + j) as f64
        }));
        assert!(dt_forward(&rho, &g).values.iter().all(|&v| v == 0.0));

        let ramp = DensityField::from_array(Array3::from_shape_fn((6, 4, 3), |(k, _, _)| {
            k as f64 * g.dt
        }));
        for v in dt_forward(&ramp, &g).values.iter() {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn dt_adjoint_zero() {
        let g = SpaceTimeGrid::<f64>::new(3, 3, 7).unwrap();
        let out = dt_adjoint(&CenteredField::zeros(&g), &g);
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    /// Builds the time-derivative matrix from the stencil definition and
    /// multiplies by its transpose, pixel by pixel.
    fn brute_force_dt_adjoint(l: &[f64], dt: f64) -> Vec<f64> {
        let n = l.len();
        let mut d = vec![vec![0.0; n]; n];
        d[0][0] = -1.0 / dt;
        d[0][1] = 1.0 / dt;
        d[n - 1][n - 1] = 1.0 / dt;
        d[n - 1][n - 2] = -1.0 / dt;
        for (k, row) in d.iter_mut().enumerate().take(n - 1).skip(1) {
            row[k + 1] = 0.5 / dt;
            row[k - 1] = -0.5 / dt;
        }
        (0..n).map(|q| (0..n).map(|k| d[k][q] * l[k]).sum()).collect()
    }

    #[test]
    fn dt_adjoint_matches_transposed_matrix() {
        // Covers the closed stencil (n_t >= 4) and the matrix fallback (2, 3).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n_t in 2..9 {
            let g = SpaceTimeGrid::<f64>::new(3, 2, n_t).unwrap();
            let lam = rand3(&mut rng, (n_t, 3, 2));
            let out = dt_adjoint(&CenteredField::from_array(lam.clone()), &g);
            for i in 0..3 {
                for j in 0..2 {
                    let col: Vec<f64> = (0..n_t).map(|k| lam[[k, i, j]]).collect();
                    let expect = brute_force_dt_adjoint(&col, g.dt);
                    for (k, e) in expect.iter().enumerate() {
                        assert!((out.values[[k, i, j]] - e).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dt_adjoint_single_pulse_n5() {
        let g = SpaceTimeGrid::<f64>::new(2, 2, 5).unwrap();
        let lam = Array3::from_shape_fn((5, 2, 2), |(k, _, _)| if k == 2 { 1.0 } else { 0.0 });
        let out = dt_adjoint(&CenteredField::from_array(lam), &g);
        // dt = 1/4: only rows 1 and 3 of the derivative matrix reach column 2.
        let expect = brute_force_dt_adjoint(&[0.0, 0.0, 1.0, 0.0, 0.0], 0.25);
        assert_eq!(expect, vec![0.0, -2.0, 0.0, 2.0, 0.0]);
        for (k, &e) in expect.iter().enumerate() {
            assert_eq!(out.values[[k, 1, 0]], e);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = SpaceTimeGrid::<f64>::new(6, 5, 3).unwrap();
        assert!(divergence(&MomentumField::zeros(&g), &g)
            .values
            .iter()
            .all(|&v| v == 0.0));

        let c = 0.7;
        let m = MomentumField::from_parts(
            Array3::from_elem((3, 7, 5), c),
            Array3::zeros((3, 6, 6)),
        )
        .unwrap();
        let d = divergence(&m, &g);
        for k in 0..3 {
            for j in 0..5 {
                assert!((d.values[[k, 0, j]] - c / g.dx).abs() < 1e-12);
                assert!((d.values[[k, 5, j]] + c / g.dx).abs() < 1e-12);
                for i in 1..5 {
                    assert!(d.values[[k, i, j]].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn divergence_sums_to_zero_per_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = SpaceTimeGrid::<f64>::new(9, 6, 4).unwrap();
        let d = divergence(&rand_momentum(&mut rng, &g), &g);
        for k in 0..4 {
            let s: f64 = d.values.index_axis(Axis(0), k).sum();
            assert!(s.abs() < 1e-10, "{s}");
        }
    }

    #[test]
    fn div_adjoint_examples() {
        let g = SpaceTimeGrid::<f64>::new(6, 5, 3).unwrap();
        let c = div_adjoint(&CenteredField::from_array(Array3::from_elem((3, 6, 5), 2.5)), &g);
        assert!(c.mx().iter().chain(c.my().iter()).all(|&v| v == 0.0));

        let ramp = CenteredField::from_array(Array3::from_shape_fn((3, 6, 5), |(_, i, _)| {
            i as f64 * g.dx
        }));
        let a = div_adjoint(&ramp, &g);
        assert!(a.boundary_is_zero());
        for k in 0..3 {
            for j in 0..5 {
                for i in 1..6 {
                    assert!((a.mx()[[k, i, j]] + 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(a.my().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_examples() {
        let g = SpaceTimeGrid::<f64>::new(5, 4, 2).unwrap();
        let c = grad_spatial(&SpatialImage::filled(5, 4, 0.3), &g);
        assert!(c.gx.iter().chain(c.gy.iter()).all(|&v| v == 0.0));

        let ramp = SpatialImage::from_array(Array2::from_shape_fn((5, 4), |(i, _)| i as f64 * g.dx));
        let r = grad_spatial(&ramp, &g);
        for j in 0..4 {
            for i in 0..4 {
                assert!((r.gx[[i, j]] - 1.0).abs() < 1e-12);
            }
            assert_eq!(r.gx[[4, j]], 0.0);
        }
        assert!(r.gy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_adjoint_single_entry() {
        let g = SpaceTimeGrid::<f64>::new(6, 5, 2).unwrap();
        let mut z = GradientPair::zeros(6, 5);
        z.gx[[2, 3]] = 1.0;
        let out = grad_adjoint(&z, &g);
        for ((i, j), &v) in out.values.indexed_iter() {
            let expect = match (i, j) {
                (2, 3) => -1.0 / g.dx,
                (3, 3) => 1.0 / g.dx,
                _ => 0.0,
            };
            assert!((v - expect).abs() < 1e-12, "({i},{j}) {v}");
        }
        assert!(grad_adjoint(&GradientPair::zeros(6, 5), &g)
            .values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identities_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(nx, ny, nt) in &[(4, 4, 4), (8, 7, 5), (16, 16, 15), (5, 6, 2), (4, 5, 3)] {
            let g = SpaceTimeGrid::<f64>::new(nx, ny, nt).unwrap();
            for _ in 0..20 {
                let rho = DensityField::from_array(rand3(&mut rng, (nt, nx, ny)));
                let lam = CenteredField::from_array(rand3(&mut rng, (nt, nx, ny)));
                let a = dt_forward(&rho, &g).dot(&lam);
                let b = rho.values.iter().zip(dt_adjoint(&lam, &g).values.iter()).map(|(x, y)| x * y).sum();
                assert!(rel_defect(a, b) < 1e-12, "dt {a} {b}");

                let m = rand_momentum(&mut rng, &g);
                let a = divergence(&m, &g).dot(&lam);
                let b = m.dot(&div_adjoint(&lam, &g));
                assert!(rel_defect(a, b) < 1e-12, "div {a} {b}");

                let u = time_slice(&rho, 0).unwrap();
                let z = GradientPair {
                    gx: Array2::from_shape_fn((nx, ny), |_| rng.gen_range(-1.0..1.0)),
                    gy: Array2::from_shape_fn((nx, ny), |_| rng.gen_range(-1.0..1.0)),
                };
                let a = grad_spatial(&u, &g).dot(&z);
                let b = u.dot(&grad_adjoint(&z, &g));
                assert!(rel_defect(a, b) < 1e-12, "grad {a} {b}");
            }
        }
    }

    #[test]
    fn center_average_examples() {
        let g = SpaceTimeGrid::<f64>::new(5, 4, 2).unwrap();
        let (cx, cy) = center_average(&MomentumField::zeros(&g));
        assert!(cx.values.iter().chain(cy.values.iter()).all(|&v| v == 0.0));

        let m = MomentumField::from_parts(
            Array3::from_elem((2, 6, 4), 3.0),
            Array3::zeros((2, 5, 5)),
        )
        .unwrap();
        let (cx, _) = center_average(&m);
        for k in 0..2 {
            for j in 0..4 {
                assert_eq!(cx.values[[k, 0, j]], 1.5);
                assert_eq!(cx.values[[k, 4, j]], 1.5);
                for i in 1..4 {
                    assert_eq!(cx.values[[k, i, j]], 3.0);
                }
            }
        }
    }

    #[test]
    fn center_average_squared_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = SpaceTimeGrid::<f64>::new(7, 6, 3).unwrap();
        let m = rand_momentum(&mut rng, &g);
        let (cx, cy) = center_average(&m);
        for k in 0..3 {
            for i in 0..7 {
                for j in 0..6 {
                    let sx = m.mx()[[k, i + 1, j]] + m.mx()[[k, i, j]];
                    let sy = m.my()[[k, i, j + 1]] + m.my()[[k, i, j]];
                    let lhs = 4.0 * (cx.values[[k, i, j]].powi(2) + cy.values[[k, i, j]].powi(2));
                    assert!((lhs - (sx * sx + sy * sy)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn operators_are_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = SpaceTimeGrid::<f64>::new(6, 5, 5).unwrap();
        let (a, b) = (0.37, -1.9);
        let x = DensityField::from_array(rand3(&mut rng, (5, 6, 5)));
        let y = DensityField::from_array(rand3(&mut rng, (5, 6, 5)));
        let comb = DensityField::from_array(&x.values * a + &y.values * b);
        let lhs = dt_forward(&comb, &g).values;
        let rhs = &dt_forward(&x, &g).values * a + &dt_forward(&y, &g).values * b;
        assert!(lhs.iter().zip(rhs.iter()).all(|(p, q)| (p - q).abs() < 1e-12));

        let mx = rand_momentum(&mut rng, &g);
        let my = rand_momentum(&mut rng, &g);
        let lhs = divergence(&mx.lincomb(a, &my, b), &g).values;
        let rhs = &divergence(&mx, &g).values * a + &divergence(&my, &g).values * b;
        assert!(lhs.iter().zip(rhs.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
    }
}
