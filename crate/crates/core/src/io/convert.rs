use super::{IoError, Result};
use crate::physics::CavitySpec;

fn cycles_sqr(omega: f64) -> f64 {
    (omega / std::f64::consts::TAU).powi(2)
}

/// S_φφ = S_νν/(ω/2π)², rad²/Hz from Hz²/Hz at angular rate `omega`.
pub fn phase_noise_from_frequency(s_nu_nu: f64, omega: f64) -> f64 {
    s_nu_nu / cycles_sqr(omega)
}

/// S_νν = (ω/2π)² S_φφ.
pub fn frequency_noise_from_phase(s_phi_phi: f64, omega: f64) -> f64 {
    s_phi_phi * cycles_sqr(omega)
}

fn length_per_frequency(cavity: &CavitySpec) -> Result<f64> {
    let length = cavity
        .cavity_length
        .ok_or(IoError::MissingField("cavity_length_m"))?;
    let nu = cavity
        .laser_frequency
        .ok_or(IoError::MissingField("laser_frequency_hz"))?;
    Ok(length / nu)
}

/// Cavity-length noise S_LL = (L_c/ν_L)² S_νν, m²/Hz.
pub fn length_noise_from_frequency(s_nu_nu: f64, cavity: &CavitySpec) -> Result<f64> {
    Ok(length_per_frequency(cavity)?.powi(2) * s_nu_nu)
}

pub fn frequency_noise_from_length(s_ll: f64, cavity: &CavitySpec) -> Result<f64> {
    Ok(s_ll / length_per_frequency(cavity)?.powi(2))
}
