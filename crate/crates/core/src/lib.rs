//! Internal-wave scattering in two-dimensional channels with subcritical
//! bottom topography.

pub mod circle;
pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod grid;
pub mod oracle;
pub mod quadrature;
pub mod scattering;
pub mod source;
pub mod stationary;
pub mod topography;

pub use error::{Error, Result, Warning};
