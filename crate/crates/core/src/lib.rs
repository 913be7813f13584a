//! Microwave tomography of 2D dielectric phantoms.
//!
//! The crate synthesizes scattering data with a pulse-basis, point-matching
//! method-of-moments solver on a fine mesh, contaminates it with calibrated
//! noise, reconstructs the complex permittivity on a coarser mesh by
//! Levenberg-Marquardt iteration, and post-processes the reconstruction into
//! enhanced grayscale images.

pub mod config;
pub mod digest;
pub mod domain;
pub mod enhance;
pub mod error;
pub mod forward;
mod fsutil;
pub mod inverse;
pub mod linalg;
pub mod measurement;
pub mod pipeline;
pub mod specfun;

pub use error::{Error, Result};
