//! Closed-form optomechanics of a single mechanical mode coupled to a
//! driven optical cavity in the weak-coupling, rotating-wave limit.
//!
//! All rates are angular (rad/s). PSDs of the laser excess noise are
//! one-sided and per Hz. Conversion from ordinary frequencies happens at
//! the configuration boundary, see the io module.

mod occupancy;
mod response;

pub use occupancy::{
    backaction_occupancy, effective_occupancy, excess_occupancy, excess_occupancy_parts,
    min_occupancy, recast_occupancy, required_quality_factor, thermal_occupation, MinOccupancy,
    QualityRequirement,
};
pub use response::{
    amplitude_factor, chi_c, chi_m, damping_response, intracavity_mean_field, intracavity_photons,
    optical_damping, photon_flux_for_damping, sideband_angle, spring_shift,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{HBAR, PLANCK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("angle undefined at zero damping")]
    AngleUndefined,
    #[error("factor undefined at zero damping")]
    FactorUndefined,
    #[error("backaction occupancy undefined/negative for non-cooling detuning")]
    NonCoolingDetuning,
    #[error("phase-noise divergence at cos(theta)=0")]
    PhaseNoiseDivergence,
    #[error("dynamical instability: effective width {gamma_eff:.6e} rad/s is not positive")]
    Unstable { gamma_eff: f64 },
    #[error("no finite optimum; occupancy limited by n_ba only")]
    NoFiniteOptimum,
}

pub type Result<T> = std::result::Result<T, PhysicsError>;

pub(crate) fn require(cond: bool, name: &'static str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(PhysicsError::InvalidParameter {
            name,
            reason: reason.to_string(),
        })
    }
}

pub(crate) fn require_finite(value: f64, name: &'static str) -> Result<()> {
    require(value.is_finite(), name, "must be finite")
}

/// Optical cavity seen by the cooling beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    /// Full linewidth κ, rad/s.
    pub kappa: f64,
    /// Δ = ω_L − ω_c, rad/s. Negative is red detuning.
    pub detuning: f64,
    /// Cavity length, m.
    pub cavity_length: Option<f64>,
    /// Laser frequency ν_L, Hz.
    pub laser_frequency: Option<f64>,
    pub input_transmission_ppm: Option<f64>,
}

impl CavitySpec {
    pub fn new(kappa: f64, detuning: f64) -> Result<Self> {
        let cavity = Self {
            kappa,
            detuning,
            cavity_length: None,
            laser_frequency: None,
            input_transmission_ppm: None,
        };
        cavity.validate()?;
        Ok(cavity)
    }

    pub fn with_length(mut self, cavity_length: f64) -> Result<Self> {
        self.cavity_length = Some(cavity_length);
        self.validate()?;
        Ok(self)
    }

    pub fn with_laser_frequency(mut self, laser_frequency: f64) -> Result<Self> {
        self.laser_frequency = Some(laser_frequency);
        self.validate()?;
        Ok(self)
    }

    /// Same cavity, different detuning.
    pub fn detuned(&self, detuning: f64) -> Self {
        Self { detuning, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        require_finite(self.kappa, "kappa")?;
        require_finite(self.detuning, "detuning")?;
        require(self.kappa > 0.0, "kappa", "must be positive")?;
        if let Some(l) = self.cavity_length {
            require(
                l.is_finite() && l > 0.0,
                "cavity_length",
                "must be positive",
            )?;
        }
        if let Some(nu) = self.laser_frequency {
            require(
                nu.is_finite() && nu > 0.0,
                "laser_frequency",
                "must be positive",
            )?;
        }
        Ok(())
    }
}

/// A mechanical mode and its thermal bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechMode {
    pub label: String,
    /// Ω_m, rad/s.
    pub omega_m: f64,
    /// Γ_m, rad/s.
    pub gamma_m: f64,
    /// Bath temperature, K.
    pub temperature: f64,
}

impl MechMode {
    pub fn new(
        label: impl Into<String>,
        omega_m: f64,
        gamma_m: f64,
        temperature: f64,
    ) -> Result<Self> {
        let mode = Self {
            label: label.into(),
            omega_m,
            gamma_m,
            temperature,
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn from_q(
        label: impl Into<String>,
        omega_m: f64,
        q_factor: f64,
        temperature: f64,
    ) -> Result<Self> {
        require(
            q_factor.is_finite() && q_factor > 0.0,
            "q_factor",
            "must be positive",
        )?;
        Self::new(label, omega_m, omega_m / q_factor, temperature)
    }

    /// Builds a mode from whichever of (Γ_m, Q) were supplied. When both are
    /// given they must agree to 1e-9 relative.
    pub fn from_supplied(
        label: impl Into<String>,
        omega_m: f64,
        gamma_m: Option<f64>,
        q_factor: Option<f64>,
        temperature: f64,
    ) -> Result<Self> {
        match (gamma_m, q_factor) {
            (Some(g), Some(q)) => {
                let mode = Self::new(label, omega_m, g, temperature)?;
                let rel = (mode.q_factor() - q).abs() / q.abs();
                require(rel <= 1e-9, "q_factor", "inconsistent with omega_m/gamma_m")?;
                Ok(mode)
            }
            (Some(g), None) => Self::new(label, omega_m, g, temperature),
            (None, Some(q)) => Self::from_q(label, omega_m, q, temperature),
            (None, None) => Err(PhysicsError::InvalidParameter {
                name: "gamma_m",
                reason: "either gamma_m or q_factor is required".into(),
            }),
        }
    }

    pub fn q_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    pub fn validate(&self) -> Result<()> {
        require_finite(self.omega_m, "omega_m")?;
        require_finite(self.gamma_m, "gamma_m")?;
        require_finite(self.temperature, "temperature")?;
        require(self.omega_m > 0.0, "omega_m", "must be positive")?;
        require(self.gamma_m > 0.0, "gamma_m", "must be positive")?;
        require(
            self.temperature >= 0.0,
            "temperature",
            "must be non-negative",
        )
    }

    /// Same mode with a different quality factor.
    pub fn with_q(&self, q_factor: f64) -> Result<Self> {
        Self::from_q(self.label.clone(), self.omega_m, q_factor, self.temperature)
    }
}

/// How strongly the cooling beam is driving the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    /// Input photon flux |α₀|², photons/s.
    PhotonFlux(f64),
    /// Optical damping rate Γ_opt, rad/s.
    OpticalDamping(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveField {
    /// Single-photon coupling g₀, rad/s.
    pub g0: f64,
    pub drive: Drive,
}

impl DriveField {
    pub fn from_flux(g0: f64, flux: f64) -> Result<Self> {
        require(
            flux.is_finite() && flux >= 0.0,
            "input_photon_flux",
            "must be non-negative",
        )?;
        Self::checked(g0, Drive::PhotonFlux(flux))
    }

    pub fn from_damping(g0: f64, gamma_opt: f64) -> Result<Self> {
        require_finite(gamma_opt, "gamma_opt")?;
        Self::checked(g0, Drive::OpticalDamping(gamma_opt))
    }

    /// Flux from an input power P_in = |α₀|² h ν_L.
    pub fn from_power(g0: f64, power_w: f64, laser_frequency: f64) -> Result<Self> {
        require(
            power_w.is_finite() && power_w >= 0.0,
            "input_power",
            "must be non-negative",
        )?;
        require(
            laser_frequency.is_finite() && laser_frequency > 0.0,
            "laser_frequency",
            "must be positive",
        )?;
        Self::from_flux(g0, power_w / (PLANCK * laser_frequency))
    }

    fn checked(g0: f64, drive: Drive) -> Result<Self> {
        require(g0.is_finite() && g0 > 0.0, "g0", "must be positive")?;
        Ok(Self { g0, drive })
    }
}

/// White laser excess noise near the mechanical frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LaserNoise {
    /// Phase noise S_φφ, rad²/Hz, one-sided.
    pub s_phi_phi: f64,
    /// Relative amplitude noise S_εε, 1/Hz, one-sided.
    pub s_eps_eps: f64,
}

impl LaserNoise {
    pub fn new(s_phi_phi: f64, s_eps_eps: f64) -> Result<Self> {
        require(
            s_phi_phi.is_finite() && s_phi_phi >= 0.0,
            "s_phi_phi",
            "must be non-negative",
        )?;
        require(
            s_eps_eps.is_finite() && s_eps_eps >= 0.0,
            "s_eps_eps",
            "must be non-negative",
        )?;
        Ok(Self {
            s_phi_phi,
            s_eps_eps,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.s_phi_phi == 0.0 && self.s_eps_eps == 0.0
    }
}

/// Steady-state occupancy budget of a cooled mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyBudget {
    pub n_th: f64,
    pub n_ba: f64,
    /// Total excess-noise occupancy (phase + amplitude).
    pub n_exc: f64,
    pub n_exc_phase: f64,
    pub n_exc_amplitude: f64,
    pub n_eff: f64,
    pub gamma_opt: f64,
    pub gamma_eff: f64,
    pub omega_eff: f64,
}

/// Effective temperature k_B T_eff = n ħ Ω.
pub fn effective_temperature(n: f64, omega: f64) -> f64 {
    n * HBAR * omega / crate::constants::BOLTZMANN
}
