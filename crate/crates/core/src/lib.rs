//! Simulation and analysis toolkit for the totally asymmetric simple
//! exclusion process started from increasing step profiles whose shocks meet
//! at one macroscopic point.
//!
//! The crate couples all initial configurations on one randomness source and
//! encodes them as per-site priorities, tracks the tagged second-class
//! particles and their coalescing-group positions, solves the matching
//! inviscid Burgers front dynamics in closed form, and verifies the limit
//! behavior by seeded Monte Carlo against exact and semi-analytic oracles:
//!
//! - [`profiles`]: step profiles, meeting-point validation, product-measure
//!   sampling, exact cylinder-function expectations.
//! - [`dynamics`]: the rejection-free event engine, shock tracking, the
//!   initial-condition predictor, and an exact small-segment solver.
//! - [`burgers`]: front tracking and the shock-coalescence map.
//! - [`stats`]: ensemble driver, hypothesis tests, field functionals.
//! - [`acceptance`]: the pinned verification suite driven by both the test
//!   harness and the command line.

pub mod acceptance;
pub mod burgers;
pub mod dynamics;
mod error;
pub mod io;
pub mod profiles;
pub mod stats;

pub use error::{Error, Result};
