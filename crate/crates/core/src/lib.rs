//! Beam-squint-aided hierarchical 2D angle sensing for wideband OFDM ISAC
//! with uniform planar arrays.

pub mod beamforming;
pub mod channel;
pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod geometry;
pub mod power;
pub mod simkit;

pub use config::SystemConfig;
pub use error::{Error, Result};
