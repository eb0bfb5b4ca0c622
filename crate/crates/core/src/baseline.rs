//! Reference reconstructions: zero filling and the TV model
//!
//! ```text
//! min_u  ½‖K u − f‖² + α_tv Σ |∇u|
//! ```
//!
//! solved by plain primal-dual iterations with duals `p` for the data term
//! and `q` for the gradient.

use log::debug;
use ndarray::{Array2, Zip};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffops::{grad_adjoint, grad_spatial, GradientPair};
use crate::error::{Error, Result};
use crate::forward::{FourierOperator, KSpaceData};
use crate::grid::{SpaceTimeGrid, SpatialImage};
use crate::scalar::Scalar;
use crate::solver::{project_linf_ball, IterationRecord};

pub use crate::forward::zero_fill_recon;

#[derive(Clone, Debug, PartialEq)]
pub struct TvConfig<T> {
    pub alpha_tv: T,
    /// `None` picks `1/‖𝒦‖` by power iteration.
    pub tau: Option<T>,
    pub sigma: Option<T>,
    pub max_iters: usize,
    pub rel_tol: T,
    pub log_every: usize,
}

impl<T: Scalar> Default for TvConfig<T> {
    fn default() -> Self {
        Self {
            alpha_tv: T::lit(0.001),
            tau: None,
            sigma: None,
            max_iters: 5000,
            rel_tol: T::lit(1e-6),
            log_every: 10,
        }
    }
}

impl<T: Scalar> TvConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_tv > T::zero()) {
            return Err(Error::InvalidArgument("alpha_tv must be positive".into()));
        }
        for v in [self.tau, self.sigma].into_iter().flatten() {
            if !(v > T::zero()) {
                return Err(Error::InvalidArgument("tau and sigma must be positive".into()));
            }
        }
        if !(self.rel_tol >= T::zero()) {
            return Err(Error::InvalidArgument("rel_tol must be nonnegative".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidArgument("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// `½‖K u − f‖² + α_tv Σ |∇u|`, the functional the iterations minimize.
pub fn tv_objective<T: Scalar>(
    u: &SpatialImage<T>,
    op: &FourierOperator<T>,
    f: &KSpaceData<T>,
    alpha_tv: T,
    grid: &SpaceTimeGrid<T>,
) -> Result<(T, T)> {
    let ku = op.apply(u)?;
    let res = Zip::from(&ku.values)
        .and(&f.values)
        .fold(T::zero(), |acc, &a, &b| acc + (a - b).norm_sqr());
    let tv = grad_spatial(u, grid).l1_l2_norm();
    Ok((res / T::lit(2.0), alpha_tv * tv))
}

/// Power-iteration estimate of `‖𝒦‖` for `u ↦ (K u, ∇u)`.
pub fn tv_operator_norm<T: Scalar>(
    op: &FourierOperator<T>,
    grid: &SpaceTimeGrid<T>,
    iters: usize,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e5);
    let mut u = SpatialImage::from_array(Array2::from_shape_fn(grid.spatial_shape(), |_| {
        T::lit(rng.gen_range(-1.0..1.0))
    }));
    let mut estimate = T::zero();
    for _ in 0..iters {
        let n = u.dot(&u).sqrt();
        if n == T::zero() {
            break;
        }
        u.values.mapv_inplace(|v| v / n);
        let k = op.apply(&u).expect("shape matches grid");
        let mut back = op.adjoint(&k.values);
        let g = grad_adjoint(&grad_spatial(&u, grid), grid);
        Zip::from(&mut back.values)
            .and(&g.values)
            .for_each(|a, &b| *a = *a + b);
        estimate = back.dot(&back).sqrt().sqrt();
        u = back;
    }
    estimate
}

/// TV reconstruction together with its convergence log (`bb` and
/// `mass_drift` columns are zero).
pub fn tv_reconstruct_with_history<T: Scalar>(
    f: &KSpaceData<T>,
    config: &TvConfig<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<(SpatialImage<T>, Vec<IterationRecord<T>>)> {
    config.validate()?;
    if f.values.dim() != grid.spatial_shape() {
        return Err(Error::ShapeMismatch {
            expected: vec![grid.n_x, grid.n_y],
            got: f.values.shape().to_vec(),
        });
    }
    let op = FourierOperator::new(f.mask.clone());
    let step = if config.tau.is_none() || config.sigma.is_none() {
        let l = tv_operator_norm(&op, grid, 20);
        debug!("TV baseline |K| ~ {l}");
        T::one() / l
    } else {
        T::zero()
    };
    let tau = config.tau.unwrap_or(step);
    let sigma = config.sigma.unwrap_or(step);

    let mut u = zero_fill_recon(f);
    let mut u_bar = u.clone();
    let (n_x, n_y) = grid.spatial_shape();
    let mut p = Array2::from_elem((n_x, n_y), Complex::new(T::zero(), T::zero()));
    let mut q = GradientPair::zeros(n_x, n_y);
    let mut history = Vec::new();
    let denom = T::one() + sigma;

    for it in 1..=config.max_iters {
        let ku = op.apply(&u_bar)?;
        Zip::from(&mut p)
            .and(&ku.values)
            .and(&f.values)
            .and(&op.mask().keep)
            .for_each(|pv, &a, &b, &keep| {
                *pv = if keep {
                    (*pv + (a - b) * sigma) / denom
                } else {
                    Complex::new(T::zero(), T::zero())
                };
            });
        let g = grad_spatial(&u_bar, grid);
        Zip::from(&mut q.gx).and(&g.gx).for_each(|a, &b| *a = *a + sigma * b);
        Zip::from(&mut q.gy).and(&g.gy).for_each(|a, &b| *a = *a + sigma * b);
        q = project_linf_ball(&q, config.alpha_tv);

        let kt = op.adjoint(&p);
        let gt = grad_adjoint(&q, grid);
        let mut u_new = u.clone();
        Zip::from(&mut u_new.values)
            .and(&kt.values)
            .and(&gt.values)
            .for_each(|v, &a, &b| *v = *v - tau * (a + b));
        if !u_new.is_finite() {
            return Err(Error::NonFinite { iter: it, field: "u" });
        }

        let mut diff2 = T::zero();
        let two = T::lit(2.0);
        Zip::from(&mut u_bar.values)
            .and(&u_new.values)
            .and(&u.values)
            .for_each(|b, &new, &old| {
                let d = new - old;
                diff2 = diff2 + d * d;
                *b = two * new - old;
            });
        let prev2 = u.dot(&u);
        let rel_change = if prev2 > T::zero() {
            (diff2 / prev2).sqrt()
        } else {
            diff2.sqrt()
        };
        u = u_new;

        let done = rel_change <= config.rel_tol || it == config.max_iters;
        if it % config.log_every == 0 || done {
            let (fidelity, tv) = tv_objective(&u, &op, f, config.alpha_tv, grid)?;
            history.push(IterationRecord {
                iter: it,
                j: fidelity + tv,
                bb: T::zero(),
                fidelity,
                tv,
                mass_drift: T::zero(),
                rel_change,
            });
        }
        if done {
            break;
        }
    }
    Ok((u, history))
}

pub fn tv_reconstruct<T: Scalar>(
    f: &KSpaceData<T>,
    config: &TvConfig<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<SpatialImage<T>> {
    tv_reconstruct_with_history(f, config, grid).map(|(u, _)| u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{fourier_forward, make_radial_mask, SamplingMask};
    use crate::metrics::psnr;
    use crate::phantom::shepp_logan;

    fn setup(n: usize, spokes: Option<usize>) -> (SpatialImage<f64>, KSpaceData<f64>, SpaceTimeGrid<f64>) {
        let u = shepp_logan::<f64>(n).unwrap();
        let mask = match spokes {
            Some(k) => make_radial_mask(n, n, k).unwrap(),
            None => SamplingMask::full(n, n),
        };
        let f = fourier_forward(&u, &mask).unwrap();
        (u, f, SpaceTimeGrid::new(n, n, 2).unwrap())
    }

    #[test]
    fn tiny_weight_full_mask_recovers_image() {
        let (u, f, grid) = setup(32, None);
        let cfg = TvConfig { alpha_tv: 1e-8, max_iters: 200, ..Default::default() };
        let out = tv_reconstruct(&f, &cfg, &grid).unwrap();
        assert!(psnr(&out, &u).unwrap() >= 60.0);
    }

    #[test]
    fn huge_weight_flattens_image() {
        let (_, f, grid) = setup(32, Some(10));
        let op = FourierOperator::new(f.mask.clone());
        let zf = zero_fill_recon(&f);
        let cfg = TvConfig { alpha_tv: 1e3, max_iters: 3000, rel_tol: 0.0, ..Default::default() };
        let out = tv_reconstruct(&f, &cfg, &grid).unwrap();
        let tv_out = tv_objective(&out, &op, &f, 1.0, &grid).unwrap().1;
        let tv_zf = tv_objective(&zf, &op, &f, 1.0, &grid).unwrap().1;
        assert!(tv_out <= 1e-3 * tv_zf, "{tv_out} vs {tv_zf}");
    }

    #[test]
    fn objective_does_not_exceed_initializer() {
        let (_, f, grid) = setup(32, Some(10));
        let op = FourierOperator::new(f.mask.clone());
        for &a in &[1e-4, 1e-3, 1e-2] {
            let cfg = TvConfig { alpha_tv: a, max_iters: 500, ..Default::default() };
            let out = tv_reconstruct(&f, &cfg, &grid).unwrap();
            let (d0, t0) = tv_objective(&zero_fill_recon(&f), &op, &f, a, &grid).unwrap();
            let (d1, t1) = tv_objective(&out, &op, &f, a, &grid).unwrap();
            assert!(d1 + t1 <= d0 + t0, "alpha {a}: {} > {}", d1 + t1, d0 + t0);
        }
    }

    #[test]
    fn history_logs_requested_rows() {
        let (_, f, grid) = setup(16, Some(6));
        let cfg = TvConfig { max_iters: 25, log_every: 10, rel_tol: 0.0, ..Default::default() };
        let (_, h) = tv_reconstruct_with_history(&f, &cfg, &grid).unwrap();
        let iters: Vec<_> = h.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![10, 20, 25]);
        assert!(h.iter().all(|r| r.bb == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let (_, f, grid) = setup(16, Some(6));
        let cfg = TvConfig { alpha_tv: 0.0, ..Default::default() };
        assert!(tv_reconstruct(&f, &cfg, &grid).is_err());
    }
}
