//! Nonlinear mixed-effects modelling of signal propagation on a fixed graph.
//!
//! The library fits, personalizes, simulates and predicts with a model of
//! longitudinal measurement maps on a shared weighted graph: a group-average
//! geodesic trajectory per node, smooth across the graph through kernel
//! interpolation from sparse control nodes, plus per-subject time-warps and
//! space-shifts. Estimation runs MCMC-SAEM (adaptive Metropolis-within-Gibbs
//! simulation, stochastic approximation of sufficient statistics, closed-form
//! maximization).
//!
//! All numerics are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases at the crate root pin the `f64` instantiation used by the CLI.

// Validation deliberately writes `!(x > 0)`: false for NaN, unlike `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Hot loops index several parallel arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod network;
pub mod personalize;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 instantiations of the main types.
pub type MeshNetwork64 = network::MeshNetwork<f64>;
pub type DistanceMatrix64 = network::DistanceMatrix<f64>;
pub type ControlNodeSet64 = network::ControlNodeSet<f64>;
pub type InterpolationOperator64 = network::InterpolationOperator<f64>;
pub type PopulationParameters64 = model::PopulationParameters<f64>;
pub type IndividualParameters64 = model::IndividualParameters<f64>;
pub type LongitudinalDataset64 = model::LongitudinalDataset<f64>;
pub type SamplerConfig64 = inference::SamplerConfig<f64>;
pub type FitResult64 = inference::FitResult<f64>;
pub type CohortSpec64 = simulate::CohortSpec<f64>;
pub type PersonalizationConfig64 = personalize::PersonalizationConfig<f64>;
