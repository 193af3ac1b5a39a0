//! Physical constants (CODATA 2018, SI).

/// Boltzmann constant, J/K (exact).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts an ordinary frequency in Hz to an angular rate in rad/s.
#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    std::f64::consts::TAU * f_hz
}

/// Converts an angular rate in rad/s to an ordinary frequency in Hz.
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / std::f64::consts::TAU
}
