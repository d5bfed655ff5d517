//! Deterministic discrete-velocity solver for the spatially homogeneous
//! Boltzmann equation with soft-potential kernels, plus numerical oracles
//! for the inequalities that govern moment growth, entropy dissipation and
//! relaxation to equilibrium.
//!
//! - [`kernel`]: collision kernels `B(z, σ) = b(cos θ)|z|^γ`, truncations, angular constants
//! - [`geometry`]: collision transform, `Δφ`, the weak-form operator `L[Δφ]`
//! - [`distribution`]: velocity grid, density fields, moments, entropies, distances
//! - [`collision`]: conservative pair-event quadrature of `Q`, `L(f)`, `D(f)`, projection
//! - [`simulator`]: time stepping, truncation sequences, diagnostics, the g-flow
//! - [`oracles`]: seeded inequality suites with worst-margin reports
//! - [`experiments`]: theorem-level drivers and the minimal tail-radius solver
//!
//! The crate is `no_std` with `alloc`. Enable `std` (default) for native
//! float intrinsics and threaded collision sums, or `libm` for bare targets.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("enable either the `std` or the `libm` feature");

extern crate alloc;

pub mod collision;
pub mod distribution;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod math;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
