//! Quantum work statistics of a single trapped ion whose axial trap
//! frequency is ramped in time.
//!
//! The crate computes exact two-point-measurement work distributions for
//! ramps of `ω²(t)`, checks the exponential work average and the
//! forward/backward fluctuation relation against closed-form free energies,
//! simulates the sideband-pulse number-state filter used to read out phonon
//! numbers, emulates the full prepare/filter/ramp/filter experiment as a
//! seeded Monte Carlo run, and evolves phonon populations under an
//! engineered reservoir to obtain heat distributions.

pub mod bath;
pub mod cli;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod propagator;
pub mod special;
pub mod work;

pub use error::{Error, Result};
