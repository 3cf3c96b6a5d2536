//! Numerical laboratory for nonlinear Markov processes.
//!
//! The crate solves Nemytskii-type nonlinear Fokker-Planck-Kolmogorov equations
//! on a uniform 1-D grid, simulates the associated distribution-dependent SDEs
//! with kernel-density feedback, and checks the structural properties that
//! make the resulting path laws a nonlinear Markov process: the flow property,
//! the conditional (Markov) property, reconstruction of finite-dimensional
//! distributions from conditional kernels, and the failure of Chapman-Kolmogorov
//! composition for nonlinear flows.
//!
//! The crate is `no_std` with `alloc`. File formats, configuration and the CLI
//! live in the companion `nlmarkov-lab` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coefficients;
mod error;
pub mod grid;
pub mod pde;
pub mod particles;
pub mod quad;
pub mod verify;

pub use coefficients::{CoefficientKind, CoefficientSet, ScalarFn};
pub use error::{Error, Result};
pub use grid::{Grid, GridDensity, MarginalFlow};
pub use particles::{KdeSpec, ParticleEnsemble, PathStore};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
