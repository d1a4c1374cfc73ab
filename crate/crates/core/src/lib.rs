//! Nuclear-spin echo simulator for ionized group-V donors in silicon.
//!
//! * [`spin`]: Hamiltonian, evolution-frequency table, coherence orders.
//! * [`pulse`]: ideal pulses, free evolution, sequence execution and a
//!   dense-unitary reference propagator.
//! * [`noise`]: static disorder, fluctuator baths, light/bias charge bursts.
//! * [`experiments`]: Hahn, three-pulse phase-cycled and CPMG protocols,
//!   decay and power-law fits.
//! * [`cli`]: configuration files, batch runs and result output.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod pulse;
pub mod spin;

pub use error::{Error, Result};
