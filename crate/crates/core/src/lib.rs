//! Simulator of MTJ-based probabilistic spin logic.
//!
//! Two levels of description share one vocabulary:
//!
//! * device/circuit level: [`mtj`] telegraph devices inside [`analog`]
//!   p-blocks, coupled through a synthesized resistor network and advanced
//!   by [`engine`];
//! * behavioral level: ideal p-bits sampling a Boltzmann distribution
//!   ([`behavioral`]), whose exact enumeration serves as the reference the
//!   circuit level is checked against.
//!
//! [`experiments`] reproduces the p-block and invertible-AND measurements on
//! top of both.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analog;
pub mod behavioral;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod mtj;
pub mod report;
pub mod rng;
pub mod stats;
pub mod synthesis;

pub use error::{PslError, Result};
