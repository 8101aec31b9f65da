//! Tunnelling decay of atoms held in an accelerated optical lattice, and its
//! modification by repeated measurement-like interruptions.

pub mod analysis;
pub mod bands;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod expm;
pub mod schedule;
pub mod units;

pub use error::{Error, Result};
