//! Simulation of high-harmonic generation (HHG) driven by quantum states of light.
//!
//! The emitted spectrum for an arbitrary light state is obtained by weighting
//! semiclassical single-electron TDSE runs with the Husimi distribution of the
//! driving pulse mode. The [`correction`] module evaluates the temporal-mode
//! correction factor that measures how far the result departs from the
//! diagonal (single-mode) approximation.
//!
//! All internal quantities are in Hartree atomic units. SI values appear only
//! in [`units`] conversions and in [`pulse::PulseMode`] bookkeeping.

pub mod correction;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod fourier;
pub mod light_states;
pub mod pipeline;
pub mod pulse;
pub mod quadrature;
pub mod spectrum;
pub mod tdse;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
