//! Simulation and noise-spectroscopy toolkit for an injection-locked
//! Josephson parametric oscillator.
//!
//! * [`potential`]: effective rotating-frame potential and its stationary points.
//! * [`dynamics`]: overdamped Langevin IQ traces, state labelling, telegraph references.
//! * [`spectra`]: Welch auto/cross spectra, noise covariance matrix and its rotation
//!   into phase and amplitude quadratures.
//! * [`fitting`]: Lorentzian and power-law fits of noise spectra.
//! * [`calib`]: photon-number and power-unit conversions.

pub mod calib;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod potential;
pub mod spectra;
mod sym2;
pub mod trace_io;

pub use error::{JpoError, Result};
