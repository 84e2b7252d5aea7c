//! Simulation of state-dependent tweezer and oscillating-field two-qubit
//! gates in linear trapped-ion crystals.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod calibrate;
pub mod crystal;
mod dop853;
pub mod drive;
pub mod error;
pub mod evolve;
pub mod hilbert;
pub mod linalg;
pub mod metric;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Trap = crystal::TrapSpec<f64>;
pub type Modes = crystal::CrystalModes<f64>;
pub type Tweezer = crystal::TweezerPerturbation<f64>;
pub type Sparse = hilbert::CsrMatrix<f64>;
pub type Thermal = hilbert::ThermalEnsemble<f64>;
pub type State = hilbert::StateVector<f64>;
pub type Gate = drive::GateConfig<f64>;
pub type Schedule = evolve::PulseSchedule<f64>;
pub type Report = metric::FidelityReport<f64>;
