//! Security simulation for Franson-interferometer time-bin QKD.
//!
//! The crate models biphoton time-bin states ([`statevec`]), Franson
//! interferometer statistics ([`franson`]), eavesdropper measurements
//! ([`attacks`]), exact information/disturbance figures of merit
//! ([`metrics`]), a Monte Carlo protocol simulator ([`mcsim`]) and the
//! Franson-block network that realizes a Fourier-basis measurement
//! ([`mubnet`]).

pub mod attacks;
pub mod error;
pub mod format;
pub mod franson;
pub mod mcsim;
pub mod metrics;
pub mod mubnet;
pub mod statevec;

pub use error::{Error, Result};
