//! Benamou–Brenier kinetic energy and the transport diagnostics built on it.
//!
//! The energy density is `Ψ(t, x) = |x|²/(2t)` for `t > 0`, `0` at the
//! origin and `+∞` elsewhere; `+∞` is returned as `T::infinity()` and never
//! raised as an error.

use ndarray::Zip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffops::center_average;
use crate::error::{Error, Result};
use crate::grid::{total_mass, time_slice, DensityField, MomentumField, SpaceTimeGrid};
use crate::scalar::Scalar;

/// Default threshold under which a density cell counts as empty.
pub const DEFAULT_EPS_ZERO: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TransportDiagnostics<T> {
    pub bb_energy: T,
    /// Total mass of each time slice.
    pub mass_profile: Vec<T>,
    /// `max_k |mass_k − mass_0| / mass_0` (absolute when `mass_0 = 0`).
    pub mass_drift: T,
    /// `Σ |m̄| · dx·dy·dt`.
    pub momentum_l1: T,
    /// `Σ_k mass_k · dt`.
    pub spacetime_mass: T,
}

impl<T: Scalar> TransportDiagnostics<T> {
    /// Cauchy–Schwarz bound `√(2·B·M)` on the momentum mass. The factor 2
    /// comes from the ½ carried by the energy density.
    pub fn integrability_bound(&self) -> T {
        (T::lit(2.0) * self.bb_energy * self.spacetime_mass).sqrt()
    }

    pub fn integrability_holds(&self, tol: T) -> bool {
        self.momentum_l1 <= self.integrability_bound() + tol
    }

    /// `√(2 B)` from the recorded energy.
    pub fn w2_estimate(&self) -> Result<T> {
        if self.bb_energy.is_infinite() {
            return Err(Error::InfiniteEnergy);
        }
        Ok((T::lit(2.0) * self.bb_energy).sqrt())
    }
}

pub fn psi<T: Scalar>(t: T, x: [T; 2]) -> T {
    let n2 = x[0] * x[0] + x[1] * x[1];
    if t > T::zero() {
        n2 / (T::lit(2.0) * t)
    } else if t == T::zero() && n2 == T::zero() {
        T::zero()
    } else {
        T::infinity()
    }
}

/// Where the momentum is paired with the density in the kinetic energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stencil {
    /// Face momenta averaged to cell centers, paired with the cell density.
    #[default]
    Centered,
    /// Each face momentum paired with the mean density of its two cells.
    /// This is the pairing used by the solver's momentum step, so cells
    /// that the density step clamps to zero never carry momentum.
    Staggered,
}

/// Discrete `B(ρ, m) = Σ Ψ(ρ, m̄) dx dy dt` with `m̄` the face-to-center
/// average. Cells with `ρ ≤ eps_zero` count as empty: they contribute zero
/// when `|m̄| ≤ eps_zero` and `+∞` otherwise; `ρ < −eps_zero` is `+∞`.
pub fn bb_energy<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
    eps_zero: T,
) -> T {
    let (cx, cy) = center_average(m);
    let two = T::lit(2.0);
    let mut acc = T::zero();
    let mut infinite = false;
    Zip::from(&rho.values)
        .and(&cx.values)
        .and(&cy.values)
        .for_each(|&r, &a, &b| {
            if infinite {
                return;
            }
            let n2 = a * a + b * b;
            if r < -eps_zero {
                infinite = true;
            } else if r <= eps_zero {
                if n2.sqrt() > eps_zero {
                    infinite = true;
                }
            } else {
                acc = acc + n2 / (two * r);
            }
        });
    if infinite {
        T::infinity()
    } else {
        acc * grid.cell_volume()
    }
}

/// `Σ_faces Ψ(ρ_face, m_face) dx dy dt` with `ρ_face` the mean of the two
/// adjacent cells. Same empty-cell convention as [`bb_energy`].
pub fn bb_energy_staggered<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
    eps_zero: T,
) -> T {
    use ndarray::s;
    if rho.values.iter().any(|&r| r < -eps_zero) {
        return T::infinity();
    }
    let r = &rho.values;
    let (_, n_x, n_y) = r.dim();
    let half = T::lit(0.5);
    let face = |a: T, b: T, q: T| -> T {
        let rf = half * (a + b);
        if rf <= eps_zero {
            if q.abs() > eps_zero {
                T::infinity()
            } else {
                T::zero()
            }
        } else {
            q * q / (T::lit(2.0) * rf)
        }
    };
    let ex = Zip::from(m.mx().slice(s![.., 1..n_x, ..]))
        .and(r.slice(s![.., 1.., ..]))
        .and(r.slice(s![.., ..n_x - 1, ..]))
        .fold(T::zero(), |acc, &q, &a, &b| acc + face(a, b, q));
    let ey = Zip::from(m.my().slice(s![.., .., 1..n_y]))
        .and(r.slice(s![.., .., 1..]))
        .and(r.slice(s![.., .., ..n_y - 1]))
        .fold(T::zero(), |acc, &q, &a, &b| acc + face(a, b, q));
    (ex + ey) * grid.cell_volume()
}

pub fn bb_energy_with<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
    eps_zero: T,
    stencil: Stencil,
) -> T {
    match stencil {
        Stencil::Centered => bb_energy(rho, m, grid, eps_zero),
        Stencil::Staggered => bb_energy_staggered(rho, m, grid, eps_zero),
    }
}

/// Gap between `Ψ(t, x)` and the best dual value `a t + b·x` over the
/// parabola boundary `a = −½|b|²` evaluated at the given `b` samples.
pub fn legendre_gap_with<T: Scalar>(t: T, x: [T; 2], samples: &[[T; 2]]) -> Result<T> {
    let p = psi(t, x);
    if !p.is_finite() {
        return Err(Error::InvalidArgument(
            "legendre gap undefined where Ψ is infinite".into(),
        ));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let half = T::lit(0.5);
    let best = samples
        .iter()
        .map(|b| -half * (b[0] * b[0] + b[1] * b[1]) * t + b[0] * x[0] + b[1] * x[1])
        .fold(T::neg_infinity(), T::max);
    Ok(p - best)
}

/// [`legendre_gap_with`] over `n_samples` pseudo-random `b`. The first
/// sample is the origin; the rest are uniform on a box that contains the
/// maximizer `x/t`. The sequence for a seed is a prefix of the sequence for
/// any larger `n_samples`, so the gap is nonincreasing in `n_samples`.
pub fn legendre_gap<T: Scalar>(t: T, x: [T; 2], n_samples: usize, seed: u64) -> Result<T> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if !psi(t, x).is_finite() {
        return Err(Error::InvalidArgument(
            "legendre gap undefined where Ψ is infinite".into(),
        ));
    }
    let radius = if t > T::zero() {
        T::lit(2.0) * (x[0].abs().max(x[1].abs()) / t) + T::one()
    } else {
        T::one()
    };
    let r = radius.to_f64_lossy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    samples.push([T::zero(), T::zero()]);
    for _ in 1..n_samples {
        let b0: f64 = rng.gen_range(-r..=r);
        let b1: f64 = rng.gen_range(-r..=r);
        samples.push([T::lit(b0), T::lit(b1)]);
    }
    legendre_gap_with(t, x, &samples)
}

pub fn diagnostics<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
) -> TransportDiagnostics<T> {
    diagnostics_with(rho, m, grid, T::lit(DEFAULT_EPS_ZERO), Stencil::Centered)
}

pub fn diagnostics_with<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
    eps_zero: T,
    stencil: Stencil,
) -> TransportDiagnostics<T> {
    let mass_profile: Vec<T> = (0..rho.n_t())
        .map(|k| total_mass(&time_slice(rho, k).expect("k in range"), grid))
        .collect();
    let m0 = mass_profile[0];
    let mass_drift = mass_profile.iter().fold(T::zero(), |acc, &mk| {
        let d = (mk - m0).abs();
        acc.max(if m0 != T::zero() { d / m0.abs() } else { d })
    });
    let (cx, cy) = center_average(m);
    let momentum_l1 = Zip::from(&cx.values)
        .and(&cy.values)
        .fold(T::zero(), |acc, &a, &b| acc + (a * a + b * b).sqrt())
        * grid.cell_volume();
    let spacetime_mass = mass_profile.iter().fold(T::zero(), |a, &b| a + b) * grid.dt;
    TransportDiagnostics {
        bb_energy: bb_energy_with(rho, m, grid, eps_zero, stencil),
        mass_profile,
        mass_drift,
        momentum_l1,
        spacetime_mass,
    }
}

/// `√(2 B)`, the transport distance implied by the kinetic energy.
pub fn w2_estimate<T: Scalar>(
    rho: &DensityField<T>,
    m: &MomentumField<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<T> {
    let b = bb_energy(rho, m, grid, T::lit(DEFAULT_EPS_ZERO));
    if b.is_infinite() {
        return Err(Error::InfiniteEnergy);
    }
    Ok((T::lit(2.0) * b).sqrt())
}
