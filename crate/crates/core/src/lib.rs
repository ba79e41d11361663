//! Bohmian trajectories for three-term harmonic-oscillator superpositions in 3-D.
//!
//! The numerical kernel (eigenfunctions, wavefunction, velocity field,
//! integrator, surfaces) is generic over [`Real`]; the aliases below fix the
//! scalar type for the common cases.

pub mod diagnostics;
pub mod eigenbasis;
pub mod error;
pub mod flow;
pub mod integrator;
pub mod linalg;
pub mod nodal;
pub mod perturbation;
pub mod quadrature;
pub mod scalar;
pub mod surfaces;
pub mod wavefunction;

pub use error::{Error, Result};
pub use scalar::Real;

pub type WaveSpecF64 = wavefunction::WaveSpec<f64>;
pub type WaveSpecF32 = wavefunction::WaveSpec<f32>;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
