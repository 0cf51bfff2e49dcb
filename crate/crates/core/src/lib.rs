//! Ground-truth Hamiltonian trajectories and symplecticity-based evaluation
//! of learned latent dynamics.
//!
//! The pipeline: simulate or load paired latent/ground-truth trajectories,
//! drop uninformative latent dimensions, fit a map `F` from latent to
//! ground-truth phase space, then score `F` by goodness of fit (R²) and by
//! how far its Jacobian is from symplectic up to scale (Sym). SyMetric is
//! the binary verdict `R² > alpha && Sym < epsilon`.

pub mod datasets;
pub mod error;
pub mod ingest;
pub mod integrators;
pub mod maplearn;
pub mod metrics;
pub mod phase;
pub mod synth;
pub mod systems;

pub use error::{Error, Result};
