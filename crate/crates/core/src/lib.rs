//! Consensus dynamics with a growing population.
//!
//! Agents hold opinions `x in R^d` and relax toward each other through an
//! influence function `psi(|x_j - x_i|)`. The population grows as
//! `dN/dt = b(t, N) N`; newborns arrive with the boundary opinion `X(t, N_t)`.
//! The crate simulates the particle model and its kinetic (measure-valued)
//! counterpart, and provides the diagnostics and reference solutions needed
//! to check them against each other.

pub mod diagnostics;
pub mod error;
pub mod growth;
pub mod inflow;
pub mod interaction;
pub mod kernels;
pub mod kinetic;
pub mod micro;
pub mod oracles;
pub mod scenario;
pub mod verify;
pub mod output;

pub use error::{Error, Result};
