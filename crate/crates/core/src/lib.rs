//! Voltage control of multi-terminal HVDC grids.
//!
//! Converters are capacitor nodes joined by resistive DC lines. Two control
//! laws are provided: decentralized droop and a distributed averaging
//! controller that exchanges reference offsets over a communication graph
//! (optionally with a uniform delay). The crate assembles the closed loops,
//! computes their equilibria and spectral stability conditions, and
//! integrates step responses.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod error;
pub mod graph;
pub mod model;
pub mod output;
pub mod simulator;

pub use error::{Error, Result};
