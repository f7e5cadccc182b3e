//! KEIBS: kernel expected improvement via Brownian fields and sparse grids.
//!
//! A simulation-optimization toolkit built around three pieces:
//!
//! * a two-stage sampler that batch-samples a classical sparse grid, fits
//!   kernel ridge regression under a Brownian-field kernel, then follows an
//!   expected-improvement rule over the next sparse-grid level;
//! * exact sparse inverse-kernel-matrix algebra for tensor Markov kernels on
//!   grids, which keeps every solve fast without approximating anything;
//! * benchmark problems (closed-form test functions, an assortment model, a
//!   Jackson network, a tandem-line simulator) and a seeded experiment
//!   harness with CSV/JSON outputs.
//!
//! Start with the runnable programs under `examples/`, one per capability,
//! or the `bench` binary for config-driven experiments.

pub mod error;
pub mod fastinv;
pub mod grid;
pub mod kernel;
pub mod optimizer;
pub mod problems;
pub mod surrogate;

pub use error::{Error, Result};

/// Library version recorded in experiment outputs.
pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}
