//! SI constants (CODATA 2018) and unit helpers.

use std::f64::consts::PI;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of ¹⁷¹Yb⁺ in atomic mass units (electron mass neglected).
pub const YB171_AMU: f64 = 170.936_325_8;

/// Cyclic frequency in Hz to angular frequency in rad/s.
pub fn angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

/// Angular frequency in rad/s to cyclic frequency in Hz.
pub fn cyclic(rad_per_s: f64) -> f64 {
    rad_per_s / (2.0 * PI)
}
