//! Interference mitigation for FMCW radar by iterative sparse search over
//! a multi-angle fractional Fourier grid.

pub mod chain;
pub mod detector;
pub mod eigenbasis;
pub mod emdfrft;
pub mod error;
pub mod frontend;
pub mod io;
pub mod metrics;
pub mod mitigation;
pub mod provenance;
pub mod sigmodel;
pub mod stft;

pub use error::{Error, Result};
