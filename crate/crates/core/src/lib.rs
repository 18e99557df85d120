//! Unsupervised event detection for distribution-grid phasor streams using
//! GAN discriminators as anomaly scores, plus a median-deviation baseline, a
//! labeled synthetic feeder generator and event-level evaluation.

pub mod detector;
pub mod error;
pub mod eval;
pub mod gan;
pub mod io;
pub mod mad;
pub mod nn;
pub mod phasor;
pub mod synth;

pub use error::{Error, Result};
