//! Numerical laboratory for Hermite processes on a discretized Wiener space:
//! process simulation through multiple Wiener-Itô integrals, pathwise
//! Malliavin derivatives, Gram-matrix factorizations, and statistical
//! verification suites for the structural identities behind density existence.

pub mod chaos;
pub mod error;
pub mod experiments;
pub mod gram;
pub mod grid;
pub mod kernels;
pub mod numeric;
pub mod params;
pub mod stats;

pub use error::{HermiteError, Result};
pub use grid::{build_grid, sample_increments, wiener_integral, TimeGrid, WienerSample};
pub use kernels::{
    hermite_process_sample, malliavin_derivative, DerivativeVector, KernelCache, KernelSpec,
};
pub use params::{
    a_constant, beta, beta_identity_rhs, make_params, power_law_double_integral, HermiteParams,
};
