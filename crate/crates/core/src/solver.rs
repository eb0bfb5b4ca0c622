//! Primal-dual solver for the Wasserstein-prior + TV reconstruction model
//!
//! ```text
//! min_{ρ,m}  Σ |m|²/(2ρ) + (α/2)‖K ρ₁ − f‖² + β Σ |∇ρ₁|   s.t.  ∂_t ρ + div m = 0,  ρ₀ = μ
//! ```
//!
//! Each iteration performs a dual ascent step on the continuity multiplier
//! `λ`, the data multiplier `η` and the TV multiplier `ζ`, a proximal descent
//! step on `(ρ, m)` (a cubic per density cell, then a closed-form momentum
//! shrinkage), re-pins the endpoint slices, and extrapolates.

use log::{debug, warn};
use ndarray::{s, Array2, Axis, Zip};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffops::{
    div_adjoint, divergence, dt_adjoint, dt_forward, grad_adjoint, grad_spatial, CenteredField,
    GradientPair,
};
use crate::error::{Error, Result};
use crate::forward::{FourierOperator, KSpaceData, SamplingMask};
use crate::grid::{
    dot3, set_time_slice, time_slice, total_mass, DensityField, DualState, MomentumField,
    SpaceTimeGrid, SpatialImage,
};
use crate::scalar::Scalar;
use crate::transport::{self, Stencil, TransportDiagnostics};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Template pinned at `t = 0`, data and TV act on the `t = 1` slice.
    Reconstruct,
    /// Both endpoints pinned, no data or TV term: a discrete transport geodesic.
    Geodesic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T> {
    pub alpha: T,
    pub beta: T,
    pub tau: T,
    pub sigma: T,
    pub n_t: usize,
    pub max_iters: usize,
    /// Stop once `‖x^{l+1} − x^l‖ / ‖x^l‖ ≤ rel_tol` for `x = (ρ, m)`.
    pub rel_tol: T,
    pub mode: Mode,
    /// History is recorded every `log_every` iterations and at the last one.
    pub log_every: usize,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(100.0),
            beta: T::lit(0.001),
            tau: T::lit(0.001),
            sigma: T::lit(0.01),
            n_t: 15,
            max_iters: 5000,
            rel_tol: T::lit(1e-6),
            mode: Mode::Reconstruct,
            log_every: 10,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if self.mode == Mode::Reconstruct && !(self.alpha > T::zero()) {
            return bad("alpha must be positive");
        }
        if !(self.beta >= T::zero()) {
            return bad("beta must be nonnegative");
        }
        if !(self.tau > T::zero()) || !(self.sigma > T::zero()) {
            return bad("tau and sigma must be positive");
        }
        if !(self.rel_tol >= T::zero()) {
            return bad("rel_tol must be nonnegative");
        }
        if self.n_t < 2 {
            return bad("n_t must be at least 2");
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub j: T,
    pub bb: T,
    pub fidelity: T,
    pub tv: T,
    pub mass_drift: T,
    pub rel_change: T,
}

impl<T: Scalar> IterationRecord<T> {
    pub const CSV_HEADER: &'static str = "iter,J,bb,fidelity,tv,mass_drift,rel_change";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.iter, self.j, self.bb, self.fidelity, self.tv, self.mass_drift, self.rel_change
        )
    }
}

/// Writes a convergence log in the shared CSV schema.
pub fn history_csv<T: Scalar>(history: &[IterationRecord<T>]) -> String {
    let mut out = String::from(IterationRecord::<T>::CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct SolverState<T> {
    pub rho: DensityField<T>,
    pub m: MomentumField<T>,
    pub rho_bar: DensityField<T>,
    pub m_bar: MomentumField<T>,
    pub duals: DualState<T>,
    pub iter: usize,
    pub history: Vec<IterationRecord<T>>,
}

impl<T: Scalar> SolverState<T> {
    /// `ρ⁰ = μ` at every time, zero momentum and multipliers.
    pub fn initial(mu: &SpatialImage<T>, grid: &SpaceTimeGrid<T>) -> Self {
        let rho = DensityField::constant_in_time(mu, grid.n_t);
        let m = MomentumField::zeros(grid);
        Self {
            rho_bar: rho.clone(),
            m_bar: m.clone(),
            rho,
            m,
            duals: DualState::zeros(grid),
            iter: 0,
            history: Vec::new(),
        }
    }

    /// The `t = 1` slice.
    pub fn reconstruction(&self) -> SpatialImage<T> {
        time_slice(&self.rho, self.rho.n_t() - 1).expect("n_t >= 2")
    }
}

/// Pointwise projection of `(ζx, ζy)` onto the Euclidean ball of radius `beta`.
pub fn project_linf_ball<T: Scalar>(zeta: &GradientPair<T>, beta: T) -> GradientPair<T> {
    let mut out = zeta.clone();
    project_in_place(&mut out, beta);
    out
}

fn project_in_place<T: Scalar>(zeta: &mut GradientPair<T>, beta: T) {
    if beta <= T::zero() {
        zeta.gx.fill(T::zero());
        zeta.gy.fill(T::zero());
        return;
    }
    Zip::from(&mut zeta.gx).and(&mut zeta.gy).for_each(|a, b| {
        let norm = (*a * *a + *b * *b).sqrt();
        if norm <= beta {
            return;
        }
        // β/|t| can leave the result an ulp outside the ball; shrink until it
        // is inside, so a second projection is exactly the identity.
        let mut scale = beta / norm;
        for _ in 0..4 {
            let (x, y) = (*a * scale, *b * scale);
            if (x * x + y * y).sqrt() <= beta {
                break;
            }
            scale = scale * (T::one() - T::eps());
        }
        *a = *a * scale;
        *b = *b * scale;
    });
}

/// Largest real root of `y³ − c y² − s` for `s ≥ 0`; it lies in
/// `[max(c, 0), max(c, 0) + s^{1/3}]`, where the cubic is increasing and convex.
fn largest_root_shifted<T: Scalar>(c: T, s: T) -> T {
    let zero = T::zero();
    let lo = c.max(zero);
    if s <= zero {
        return lo;
    }
    let hi = lo + s.cbrt();
    let g = |y: T| y * y * (y - c) - s;

    // Closed form via the depressed cubic z³ + p z + q with y = z + c/3.
    let three = T::lit(3.0);
    let third = c / three;
    let p = -c * c / three;
    let q = -(T::lit(2.0) * c * c * c / T::lit(27.0)) - s;
    let disc = q * q / T::lit(4.0) + p * p * p / T::lit(27.0);
    let candidate = if disc >= zero {
        let r = disc.sqrt();
        let half_q = q / T::lit(2.0);
        (-half_q + r).cbrt() + (-half_q - r).cbrt() + third
    } else {
        let m = T::lit(2.0) * (-p / three).sqrt();
        let arg = (three * q / (p * m)).max(-T::one()).min(T::one());
        m * (arg.acos() / three).cos() + third
    };

    // Newton polish. On the bracket the cubic is convex and increasing, so
    // the iterates land at or above the root after one step and then
    // decrease onto it; a non-finite or out-of-bracket candidate restarts
    // from the upper end.
    let mut y = if candidate.is_finite() && candidate >= lo && candidate <= hi {
        candidate
    } else {
        hi
    };
    let scale = hi.max(c.abs());
    let tol = T::lit(8.0) * T::eps() * scale;
    for _ in 0..64 {
        let dg = y * (three * y - T::lit(2.0) * c);
        if !(dg > zero) {
            y = hi;
            continue;
        }
        let next = (y - g(y) / dg).max(lo).min(hi);
        if (next - y).abs() <= tol {
            return next;
        }
        y = next;
    }
    y
}

/// `max(0, largest real root of (ρ + τ)²(ρ − ρ̃) − s)`.
pub fn rho_prox<T: Scalar>(rho_tilde: T, s: T, tau: T) -> T {
    let y = largest_root_shifted(rho_tilde + tau, s.max(T::zero()));
    (y - tau).max(T::zero())
}

/// `m = (ρ_i + ρ_{i−1}) / (ρ_i + ρ_{i−1} + 2τ) · m̃` on interior faces.
pub fn momentum_update<T: Scalar>(
    m_tilde: &MomentumField<T>,
    rho_new: &DensityField<T>,
    tau: T,
) -> MomentumField<T> {
    let r = &rho_new.values;
    let (_, n_x, n_y) = r.dim();
    let two_tau = T::lit(2.0) * tau;
    let shrink = |a: T, b: T, m: T| {
        let sum = a + b;
        sum / (sum + two_tau) * m
    };
    let mut out = m_tilde.clone();
    let (mx, my) = out.parts_mut();
    Zip::from(mx.slice_mut(s![.., 1..n_x, ..]))
        .and(r.slice(s![.., 1.., ..]))
        .and(r.slice(s![.., ..n_x - 1, ..]))
        .par_for_each(|m, &a, &b| *m = shrink(a, b, *m));
    Zip::from(my.slice_mut(s![.., .., 1..n_y]))
        .and(r.slice(s![.., .., 1..]))
        .and(r.slice(s![.., .., ..n_y - 1]))
        .par_for_each(|m, &a, &b| *m = shrink(a, b, *m));
    out.pin_boundary();
    out
}

fn last_slice<T: Scalar>(rho: &DensityField<T>) -> SpatialImage<T> {
    time_slice(rho, rho.n_t() - 1).expect("n_t >= 2")
}

/// Dual ascent on `(λ, η, ζ)` at the extrapolated point. In geodesic mode
/// `η` and `ζ` stay frozen.
pub fn dual_update<T: Scalar>(
    state: &SolverState<T>,
    config: &SolverConfig<T>,
    op: &FourierOperator<T>,
    f: &KSpaceData<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<DualState<T>> {
    let sigma = config.sigma;
    let mut duals = state.duals.clone();

    let residual = dt_forward(&state.rho_bar, grid);
    let div = divergence(&state.m_bar, grid);
    Zip::from(&mut duals.lambda.values)
        .and(&residual.values)
        .and(&div.values)
        .for_each(|l, &a, &b| *l = *l + sigma * (a + b));

    if config.mode == Mode::Reconstruct {
        let rho1 = last_slice(&state.rho_bar);
        let k_rho = op.apply(&rho1)?;
        let denom = T::one() + sigma / config.alpha;
        Zip::from(&mut duals.eta)
            .and(&k_rho.values)
            .and(&f.values)
            .and(&op.mask().keep)
            .for_each(|e, &kr, &fv, &keep| {
                *e = if keep {
                    (*e + (kr - fv) * sigma) / denom
                } else {
                    Complex::new(T::zero(), T::zero())
                };
            });

        let grad = grad_spatial(&rho1, grid);
        Zip::from(&mut duals.zeta.gx)
            .and(&grad.gx)
            .for_each(|z, &g| *z = *z + sigma * g);
        Zip::from(&mut duals.zeta.gy)
            .and(&grad.gy)
            .for_each(|z, &g| *z = *z + sigma * g);
        project_in_place(&mut duals.zeta, config.beta);
    }
    Ok(duals)
}

/// Proximal descent on `(ρ, m)` followed by the endpoint reset.
/// `nu` pins the last slice (geodesic mode).
pub fn primal_update<T: Scalar>(
    state: &SolverState<T>,
    duals: &DualState<T>,
    config: &SolverConfig<T>,
    op: &FourierOperator<T>,
    mu: &SpatialImage<T>,
    nu: Option<&SpatialImage<T>>,
    grid: &SpaceTimeGrid<T>,
) -> Result<(DensityField<T>, MomentumField<T>)> {
    let tau = config.tau;
    let m_tilde = state.m.lincomb(T::one(), &div_adjoint(&duals.lambda, grid), -tau);
    let dt_adj = dt_adjoint(&duals.lambda, grid);
    let mut rho_tilde = state.rho.values.clone();
    Zip::from(&mut rho_tilde)
        .and(&dt_adj.values)
        .for_each(|r, &d| *r = *r - tau * d);

    if config.mode == Mode::Reconstruct {
        let kt = op.adjoint(&duals.eta);
        let gt = grad_adjoint(&duals.zeta, grid);
        let last = grid.n_t - 1;
        Zip::from(rho_tilde.index_axis_mut(Axis(0), last))
            .and(&kt.values)
            .and(&gt.values)
            .for_each(|r, &a, &b| *r = *r - tau * (a + b));
    }

    let (mx, my) = (m_tilde.mx(), m_tilde.my());
    let (n_x, n_y) = (grid.n_x, grid.n_y);
    let coef = tau / T::lit(8.0);
    let mut rho_new = DensityField::from_array(rho_tilde);
    Zip::from(&mut rho_new.values)
        .and(mx.slice(s![.., 1.., ..]))
        .and(mx.slice(s![.., ..n_x, ..]))
        .and(my.slice(s![.., .., 1..]))
        .and(my.slice(s![.., .., ..n_y]))
        .par_for_each(|r, &xp, &xm, &yp, &ym| {
            let sx = xp + xm;
            let sy = yp + ym;
            *r = rho_prox(*r, coef * (sx * sx + sy * sy), tau);
        });

    // Pin the endpoints before shrinking the momentum, so every face is
    // scaled by the densities that are actually stored.
    set_time_slice(&mut rho_new, 0, mu)?;
    if let Some(nu) = nu {
        set_time_slice(&mut rho_new, grid.n_t - 1, nu)?;
    }
    let m_new = momentum_update(&m_tilde, &rho_new, tau);
    Ok((rho_new, m_new))
}

/// Objective terms at `(ρ, m)`. The kinetic term is
/// [`transport::bb_energy_staggered`], the pairing the momentum step uses;
/// TV is `β Σ |∇ρ₁| dx dy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveTerms<T> {
    pub j: T,
    pub bb: T,
    pub fidelity: T,
    pub tv: T,
}

pub fn objective<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    op: &FourierOperator<T>,
    f: &KSpaceData<T>,
    config: &SolverConfig<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<ObjectiveTerms<T>> {
    let bb = transport::bb_energy_staggered(rho, m, grid, T::zero());
    let (fidelity, tv) = match config.mode {
        Mode::Reconstruct => {
            let rho1 = last_slice(rho);
            let k = op.apply(&rho1)?;
            let res = Zip::from(&k.values)
                .and(&f.values)
                .fold(T::zero(), |acc, &a, &b| acc + (a - b).norm_sqr());
            let tv = grad_spatial(&rho1, grid).l1_l2_norm() * grid.cell_area();
            (config.alpha / T::lit(2.0) * res, config.beta * tv)
        }
        Mode::Geodesic => (T::zero(), T::zero()),
    };
    Ok(ObjectiveTerms {
        j: bb + fidelity + tv,
        bb,
        fidelity,
        tv,
    })
}

/// Power-iteration estimate of `‖𝒦‖` for the stacked operator
/// `(ρ, m) ↦ (∂_t ρ + div m, K ρ₁, ∇ρ₁)`.
pub fn operator_norm_estimate<T: Scalar>(
    grid: &SpaceTimeGrid<T>,
    op: &FourierOperator<T>,
    mode: Mode,
    iters: usize,
) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut rho = DensityField::from_array(ndarray::Array3::from_shape_fn(
        grid.centered_shape(),
        |_| T::lit(rng.gen_range(-1.0..1.0)),
    ));
    let mut m = MomentumField::from_parts(
        ndarray::Array3::from_shape_fn((grid.n_t, grid.n_x + 1, grid.n_y), |_| {
            T::lit(rng.gen_range(-1.0..1.0))
        }),
        ndarray::Array3::from_shape_fn((grid.n_t, grid.n_x, grid.n_y + 1), |_| {
            T::lit(rng.gen_range(-1.0..1.0))
        }),
    )
    .expect("consistent shapes");
    let norm = |rho: &DensityField<T>, m: &MomentumField<T>| {
        (dot3(&rho.values, &rho.values) + m.dot(m)).sqrt()
    };
    let mut estimate = T::zero();
    for _ in 0..iters {
        let n = norm(&rho, &m);
        if n == T::zero() {
            break;
        }
        rho.values.mapv_inplace(|v| v / n);
        m = m.lincomb(T::one() / n, &m, T::zero());

        let lambda = continuity_residual(&rho, &m, grid);
        let mut back = dt_adjoint(&lambda, grid);
        let m_back = div_adjoint(&lambda, grid);
        if mode == Mode::Reconstruct {
            let rho1 = last_slice(&rho);
            let k = op.apply(&rho1).expect("shape checked by caller");
            let kt = op.adjoint(&k.values);
            let gt = grad_adjoint(&grad_spatial(&rho1, grid), grid);
            Zip::from(back.values.index_axis_mut(Axis(0), grid.n_t - 1))
                .and(&kt.values)
                .and(&gt.values)
                .for_each(|r, &a, &b| *r = *r + a + b);
        }
        // ‖𝒦ᵀ𝒦 x‖ with ‖x‖ = 1 converges to ‖𝒦‖²
        estimate = norm(&back, &m_back).sqrt();
        rho = back;
        m = m_back;
    }
    estimate
}

fn check_finite<T: Scalar>(
    iter: usize,
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    duals: &DualState<T>,
) -> Result<()> {
    if !rho.is_finite() {
        return Err(Error::NonFinite { iter, field: "rho" });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite { iter, field: "m" });
    }
    if !duals.lambda.values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { iter, field: "lambda" });
    }
    if !duals.eta.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFinite { iter, field: "eta" });
    }
    if !duals.zeta.gx.iter().chain(duals.zeta.gy.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite { iter, field: "zeta" });
    }
    Ok(())
}

fn mass_drift_of<T: Scalar>(rho: &DensityField<T>, grid: &SpaceTimeGrid<T>) -> T {
    let m0 = total_mass(&time_slice(rho, 0).expect("n_t >= 2"), grid);
    (1..rho.n_t()).fold(T::zero(), |acc, k| {
        let mk = total_mass(&time_slice(rho, k).expect("k < n_t"), grid);
        let d = (mk - m0).abs();
        acc.max(if m0 != T::zero() { d / m0.abs() } else { d })
    })
}

/// Runs the primal-dual loop from `state` until `max_iters` or the relative
/// change drops to `rel_tol`.
#[allow(clippy::too_many_arguments)]
fn iterate<T: Scalar>(
    mut state: SolverState<T>,
    config: &SolverConfig<T>,
    op: &FourierOperator<T>,
    f: &KSpaceData<T>,
    mu: &SpatialImage<T>,
    nu: Option<&SpatialImage<T>>,
    grid: &SpaceTimeGrid<T>,
    observer: &mut dyn FnMut(&SolverState<T>),
) -> Result<SolverState<T>> {
    let l = operator_norm_estimate(grid, op, config.mode, 20);
    let step = config.sigma * config.tau * l * l;
    if step >= T::one() {
        warn!("sigma*tau*|K|^2 = {step} >= 1 (|K| ~ {l}); primal-dual iterates may diverge");
    } else {
        debug!("sigma*tau*|K|^2 = {step} (|K| ~ {l})");
    }

    for it in 1..=config.max_iters {
        let duals = dual_update(&state, config, op, f, grid)?;
        let (rho_new, m_new) = primal_update(&state, &duals, config, op, mu, nu, grid)?;
        check_finite(it, &rho_new, &m_new, &duals)?;

        let two = T::lit(2.0);
        let mut diff2 = T::zero();
        let mut rho_bar = rho_new.values.clone();
        Zip::from(&mut rho_bar)
            .and(&state.rho.values)
            .for_each(|b, &old| {
                let d = *b - old;
                diff2 = diff2 + d * d;
                *b = two * *b - old;
            });
        let m_bar = m_new.lincomb(two, &state.m, -T::one());
        let dm = m_new.lincomb(T::one(), &state.m, -T::one());
        diff2 = diff2 + dm.dot(&dm);
        let prev2 = dot3(&state.rho.values, &state.rho.values) + state.m.dot(&state.m);
        let rel_change = if prev2 > T::zero() {
            (diff2 / prev2).sqrt()
        } else {
            diff2.sqrt()
        };

        state.rho = rho_new;
        state.m = m_new;
        state.rho_bar = DensityField::from_array(rho_bar);
        state.m_bar = m_bar;
        state.duals = duals;
        state.iter = it;

        let done = rel_change <= config.rel_tol || it == config.max_iters;
        if it % config.log_every == 0 || done {
            let terms = objective(&state.rho, &state.m, op, f, config, grid)?;
            state.history.push(IterationRecord {
                iter: it,
                j: terms.j,
                bb: terms.bb,
                fidelity: terms.fidelity,
                tv: terms.tv,
                mass_drift: mass_drift_of(&state.rho, grid),
                rel_change,
            });
            observer(&state);
        }
        if done {
            break;
        }
    }
    Ok(state)
}

/// Reconstructs `ρ₁` from undersampled data `f` with template `mu` pinned at `t = 0`.
pub fn reconstruct<T: Scalar>(
    f: &KSpaceData<T>,
    mu: &SpatialImage<T>,
    config: &SolverConfig<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<(SolverState<T>, TransportDiagnostics<T>)> {
    reconstruct_observed(f, mu, config, grid, &mut |_| {})
}

/// [`reconstruct`], calling `observer` with the state at every logged iteration.
pub fn reconstruct_observed<T: Scalar>(
    f: &KSpaceData<T>,
    mu: &SpatialImage<T>,
    config: &SolverConfig<T>,
    grid: &SpaceTimeGrid<T>,
    observer: &mut dyn FnMut(&SolverState<T>),
) -> Result<(SolverState<T>, TransportDiagnostics<T>)> {
    config.validate()?;
    if config.mode != Mode::Reconstruct {
        return Err(Error::InvalidArgument(
            "reconstruct needs Mode::Reconstruct; use transport_geodesic".into(),
        ));
    }
    check_grid(grid, config, mu)?;
    if f.values.dim() != grid.spatial_shape() {
        return Err(Error::ShapeMismatch {
            expected: vec![grid.n_x, grid.n_y],
            got: f.values.shape().to_vec(),
        });
    }
    if mu.min_value() < T::zero() {
        return Err(Error::Precondition("template must be nonnegative".into()));
    }
    if !(total_mass(mu, grid) > T::zero()) {
        return Err(Error::Precondition("template must have positive mass".into()));
    }
    let op = FourierOperator::new(f.mask.clone());
    let state = iterate(
        SolverState::initial(mu, grid),
        config,
        &op,
        f,
        mu,
        None,
        grid,
        observer,
    )?;
    let diag = solver_diagnostics(&state, grid);
    Ok((state, diag))
}

/// Discrete transport geodesic between two equal-mass densities: both
/// endpoint slices pinned, no data or TV term.
pub fn transport_geodesic<T: Scalar>(
    mu: &SpatialImage<T>,
    nu: &SpatialImage<T>,
    config: &SolverConfig<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<(SolverState<T>, TransportDiagnostics<T>)> {
    let config = SolverConfig {
        mode: Mode::Geodesic,
        ..config.clone()
    };
    config.validate()?;
    check_grid(grid, &config, mu)?;
    if nu.dim() != mu.dim() {
        return Err(Error::ShapeMismatch {
            expected: mu.values.shape().to_vec(),
            got: nu.values.shape().to_vec(),
        });
    }
    if mu.min_value() < T::zero() || nu.min_value() < T::zero() {
        return Err(Error::Precondition("densities must be nonnegative".into()));
    }
    let (a, b) = (total_mass(mu, grid), total_mass(nu, grid));
    if (a - b).abs() > T::lit(1e-6) * a.abs() {
        return Err(Error::Precondition(format!(
            "balanced transport needs equal masses, got {a} and {b}"
        )));
    }
    let (n_x, n_y) = grid.spatial_shape();
    let op = FourierOperator::new(SamplingMask::full(n_x, n_y));
    let f = KSpaceData::zeros(SamplingMask::full(n_x, n_y));
    let mut init = SolverState::initial(mu, grid);
    // straight-line interpolation between the endpoints as the starting curve
    for k in 0..grid.n_t {
        let w = T::from_count(k) * grid.dt;
        let slab: Array2<T> = Zip::from(&mu.values)
            .and(&nu.values)
            .map_collect(|&p, &q| (T::one() - w) * p + w * q);
        init.rho.values.index_axis_mut(Axis(0), k).assign(&slab);
    }
    init.rho_bar = init.rho.clone();
    let state = iterate(init, &config, &op, &f, mu, Some(nu), grid, &mut |_| {})?;
    let diag = solver_diagnostics(&state, grid);
    Ok((state, diag))
}

/// Transport diagnostics of a solver state: staggered kinetic energy, and
/// only exactly empty faces count as vacuum. The momentum step scales each
/// face by its density, so a face with tiny density carries proportionally
/// tiny momentum and finite energy.
pub fn solver_diagnostics<T: Scalar>(
    state: &SolverState<T>,
    grid: &SpaceTimeGrid<T>,
) -> TransportDiagnostics<T> {
    transport::diagnostics_with(
        &state.rho,
        &state.m,
        grid,
        T::zero(),
        Stencil::Staggered,
    )
}

fn check_grid<T: Scalar>(
    grid: &SpaceTimeGrid<T>,
    config: &SolverConfig<T>,
    mu: &SpatialImage<T>,
) -> Result<()> {
    if grid.n_t != config.n_t {
        return Err(Error::InvalidArgument(format!(
            "grid has n_t = {} but config has n_t = {}",
            grid.n_t, config.n_t
        )));
    }
    if mu.dim() != grid.spatial_shape() {
        return Err(Error::ShapeMismatch {
            expected: vec![grid.n_x, grid.n_y],
            got: mu.values.shape().to_vec(),
        });
    }
    Ok(())
}

/// Continuity residual `∂_t ρ + div m`.
pub fn continuity_residual<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
) -> CenteredField<T> {
    let mut r = dt_forward(rho, grid);
    Zip::from(&mut r.values)
        .and(&divergence(m, grid).values)
        .for_each(|a, &b| *a = *a + b);
    r
}
