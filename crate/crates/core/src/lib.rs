//! Numerical laboratory for two-dimensional Coulomb gases.
//!
//! Points live in the plane and are represented as [`Vec2`]. The Hamiltonian
//! is `w_n = −Σ_{i≠j} log|x_i − x_j| + n Σ_i V(x_i)` and the Gibbs measure at
//! inverse temperature β has density proportional to `exp(−β w_n / 2)`.
//! Blown-up coordinates are `x' = √n x` throughout.

pub mod analysis;
pub mod cli;
pub mod energy;
pub mod error;
pub mod numeric;
pub mod periodic;
pub mod potential;
pub mod sampler;
pub mod zfunc;

pub type Vec2 = nalgebra::Vector2<f64>;

pub use energy::{Configuration, EnergyReport};
pub use error::{Error, Result};
pub use potential::{EquilibriumMeasure, Potential};
