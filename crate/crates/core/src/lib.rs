//! Sub-terahertz ISAC hybrid precoding laboratory.
//!
//! Wideband channels with beam squint, a TTD + phase-shifter + power-allocation
//! hardware model, rate / CRB / C-S correlation metrics, the squint-aware
//! optimizer and its benchmarks, rate-CRB boundary tracing with the
//! dual-functional gain, and numerical checks of the closed-form Pareto analysis.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pareto;
pub mod precoder;
pub mod schemes;
pub mod theory;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type CVector = nalgebra::DVector<C64>;
pub type CMatrix = nalgebra::DMatrix<C64>;
pub type RMatrix = nalgebra::DMatrix<f64>;
