//! Undersampled Fourier reconstruction with a dynamic optimal-transport prior.
//!
//! A known template `μ` is pinned at `t = 0` and transported along a
//! continuity-equation path to the reconstruction `ρ₁`, which must also fit
//! the measured k-space samples and carry small total variation. Everything
//! is generic over `f32`/`f64` through [`Scalar`]; the aliases below fix `f64`.

// `!(x > 0)` style checks are deliberate: they reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod diffops;
pub mod error;
pub mod forward;
pub mod grid;
pub mod metrics;
pub mod phantom;
pub mod scalar;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};
pub use forward::{KSpaceData, SamplingMask};
pub use grid::{DensityField, DualState, MomentumField, SpaceTimeGrid, SpatialImage};
pub use scalar::Scalar;
pub use solver::{Mode, SolverConfig, SolverState};

pub type Grid = grid::SpaceTimeGrid<f64>;
pub type Density = grid::DensityField<f64>;
pub type Momentum = grid::MomentumField<f64>;
pub type Image = grid::SpatialImage<f64>;
pub type KSpace = forward::KSpaceData<f64>;
pub type Config = solver::SolverConfig<f64>;
pub type State = solver::SolverState<f64>;
pub type TvConfig = baseline::TvConfig<f64>;
pub type Diagnostics = transport::TransportDiagnostics<f64>;

pub type Grid32 = grid::SpaceTimeGrid<f32>;
pub type Image32 = grid::SpatialImage<f32>;
pub type Config32 = solver::SolverConfig<f32>;
