//! Simulation and analysis toolkit for routing single photons through a
//! programmable Mach-Zehnder photonic circuit.
//!
//! The crate models the full chain of a trapped-ion single-photon routing
//! experiment: 2x2 transfer matrices for imperfect directional couplers
//! ([`xfer`]), thermo-optic phase calibration fitted from extinction-ratio
//! and operating-point anchors ([`calib`]), a deterministic Monte Carlo of
//! attempt-cycled photon production, conversion losses, and detection
//! ([`source`]), the count-analysis pipeline from raw time tags to
//! efficiency-corrected splitting ratios ([`analysis`]), and rectangular
//! mesh synthesis for N x N unitaries ([`mesh`]). [`config`] and [`csvio`]
//! hold the run-configuration schema and the interchange file formats used
//! by the `photonroute` binary.
//!
//! The numerical core (`xfer`, `calib`, `mesh`) is generic over the scalar
//! type through [`scalar::Real`]; the aliases below fix f64 for everyday
//! use.

// Validation guards spell `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The matrix kernels touch two rows or columns of the same buffer in one
// pass, which iterator adapters cannot express without extra copies.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod calib;
pub mod config;
pub mod csvio;
pub mod error;
pub mod mesh;
pub mod scalar;
pub mod source;
pub mod xfer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TransferMatrix64 = xfer::TransferMatrix<f64>;
pub type CouplerSpec64 = xfer::CouplerSpec<f64>;
pub type CircuitModel64 = xfer::CircuitModel<f64>;
pub type PhaseCalibration64 = calib::PhaseCalibration<f64>;
pub type SweepCurve64 = calib::SweepCurve<f64>;
pub type MeshProgram64 = mesh::MeshProgram<f64>;
