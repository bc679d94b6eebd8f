//! Numerical toolkit for elliptic differential equations driven by fractional
//! Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`fields`], [`rng`]: uniform time grids, sampled paths, the
//!   registry of closed-form vector fields and the seed/stream RNG contract.
//! * [`fbm`]: covariance, Gram matrices with Cholesky factors and exact
//!   sampling of discrete fBm.
//! * [`fraccalc`]: Riemann-Liouville fractional integrals and Marchaud
//!   derivatives on grids.
//! * [`cameron_martin`]: the Volterra operator `K`, its adjoint `K*`,
//!   Cameron-Martin norms and the Young pairing.
//! * [`sde`]: the deterministic Itô map and pathwise solvers with Jacobian
//!   propagation.
//! * [`distance`], [`malliavin`], [`density`]: the control-distance,
//!   Malliavin-matrix and density experiments.
//! * [`report`] and [`verify`]: CSV/SVG emission and the acceptance suite
//!   shared by the CLI and the test harness.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cameron_martin;
pub mod density;
pub mod distance;
mod error;
pub mod fbm;
pub mod fields;
pub mod fraccalc;
pub mod grid;
pub mod malliavin;
pub mod report;
pub mod rng;
pub mod sde;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{registry_build, Drift, VectorFieldSet};
pub use grid::{make_grid, Hurst, Path, Regime, TimeGrid};
