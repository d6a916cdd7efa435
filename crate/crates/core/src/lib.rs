//! Non-negative latent factor analysis of high-dimensional incomplete (HDI)
//! matrices with an α-β-divergence objective.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] loads rating triples, shifts them into a strictly positive range
//!   and produces seeded 70/10/20 train/validation/test splits.
//! * [`bridge`] is the thresholded sigmoid that maps unconstrained variables to
//!   non-negative latent factors.
//! * [`divergence`] holds the α-β-divergence loss, its gradient factor and the
//!   regularised training objective.
//! * [`model`] owns the optimisation matrices and the binary model format.
//! * [`sgd`] runs per-instance SGD epochs and the manually tuned training loop.
//! * [`pso`] adapts (α, β, η, λ) with a particle swarm whose particles each
//!   train a private model.
//! * [`eval`] computes RMSE and runs manual (α, β) grid sweeps.
//! * [`synthetic`] plants low-rank non-negative matrices for recovery tests.

pub mod bridge;
pub mod data;
pub mod divergence;
mod error;
pub mod eval;
pub mod model;
pub mod pso;
pub mod seed;
pub mod sgd;
pub mod synthetic;

pub use bridge::BridgeConfig;
pub use data::{HdiDataset, RatingTriple, ScalingMeta};
pub use divergence::DivergenceParams;
pub use error::{Error, Result};
pub use model::FactorState;
pub use pso::{SearchBox, SwarmConfig};
pub use sgd::Hyperparams;
