use std::path::Path;

use serde::{Deserialize, Serialize};

use super::convert::phase_noise_from_frequency;
use super::{read_json, IoError, Result};
use crate::constants::{hz_to_angular, SPEED_OF_LIGHT};
use crate::physics::{CavitySpec, LaserNoise, MechMode};
use crate::spectrum::{BackgroundModel, BeatNote, CalibrationTone, DetectionConfig};

/// Optical cavity, with rates given as ordinary frequencies (κ/2π, Δ/2π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub kappa_hz: f64,
    pub detuning_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_length_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laser_wavelength_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laser_frequency_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_transmission_ppm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub label: String,
    /// Ω_m/2π.
    pub frequency_hz: f64,
    /// Γ_m/2π; either this or `q_factor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_factor: Option<f64>,
    pub temperature_k: f64,
    /// g₀/2π, needed for synthesis and prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSettings {
    /// Probe-mode linewidth /2π.
    pub probe_kappa_hz: f64,
    #[serde(default = "default_theta_lo")]
    pub theta_lo_rad: f64,
    #[serde(default)]
    pub probe_detuning_hz: f64,
}

fn default_theta_lo() -> f64 {
    std::f64::consts::FRAC_PI_2
}

/// Laser excess noise. Phase noise may be given directly or as frequency
/// noise, which is converted at each mode's frequency.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_phi_phi_rad2_per_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_nu_nu_hz2_per_hz: Option<f64>,
    #[serde(default)]
    pub s_eps_eps_per_hz: f64,
}

/// Smooth detection background added to synthetic spectra,
/// offset + level·(f/reference)^(−exponent) plus an optional beat note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    pub offset_hz2_per_hz: f64,
    #[serde(default)]
    pub tail_hz2_per_hz: f64,
    #[serde(default = "default_reference")]
    pub tail_reference_hz: f64,
    #[serde(default = "default_exponent")]
    pub tail_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beat_center_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beat_width_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beat_hz2_per_hz: Option<f64>,
}

fn default_reference() -> f64 {
    100e3
}

fn default_exponent() -> f64 {
    BackgroundModel::DEFAULT_TAIL_EXPONENT
}

impl BackgroundConfig {
    pub fn model(&self) -> Result<BackgroundModel> {
        let beat = match (
            self.beat_center_hz,
            self.beat_width_hz,
            self.beat_hz2_per_hz,
        ) {
            (None, None, None) => None,
            (Some(center_hz), Some(width_hz), Some(amplitude)) => Some(BeatNote {
                center_hz,
                width_hz,
                amplitude,
            }),
            _ => {
                return Err(IoError::Config(
                    "beat note needs center, width and level together".into(),
                ))
            }
        };
        let model = BackgroundModel {
            tail_offset: self.offset_hz2_per_hz,
            tail_amplitude: self.tail_hz2_per_hz * self.tail_reference_hz.powf(self.tail_exponent),
            tail_exponent: self.tail_exponent,
            beat,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Synthetic measurement campaign on one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub mode: String,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub f_step_hz: f64,
    pub n_averages: u32,
    /// Drive grid as optical damping Γ_opt/2π.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_opt_hz: Option<Vec<f64>>,
    /// Drive grid as input power; needs the laser frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_power_w: Option<Vec<f64>>,
    pub background: BackgroundConfig,
    /// Detector scale, V²/Hz per Hz²/Hz.
    #[serde(default = "default_raw_scale")]
    pub raw_scale: f64,
}

fn default_raw_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cavity: CavityConfig,
    pub modes: Vec<ModeConfig>,
    pub detection: DetectionSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_tone: Option<CalibrationTone>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<CampaignConfig>,
}

fn positive(value: f64, name: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(IoError::Config(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: Self = read_json(path)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(IoError::Config(
                "at least one mechanical mode is required".into(),
            ));
        }
        positive(self.cavity.kappa_hz, "cavity.kappa_hz")?;
        if !self.cavity.detuning_hz.is_finite() {
            return Err(IoError::Config("cavity.detuning_hz must be finite".into()));
        }
        for (value, name) in [
            (self.cavity.cavity_length_m, "cavity.cavity_length_m"),
            (self.cavity.laser_wavelength_m, "cavity.laser_wavelength_m"),
            (self.cavity.laser_frequency_hz, "cavity.laser_frequency_hz"),
        ] {
            if let Some(v) = value {
                positive(v, name)?;
            }
        }
        positive(self.detection.probe_kappa_hz, "detection.probe_kappa_hz")?;
        for mode in &self.modes {
            positive(
                mode.frequency_hz,
                &format!("mode {} frequency_hz", mode.label),
            )?;
            if let Some(g) = mode.g0_hz {
                positive(g, &format!("mode {} g0_hz", mode.label))?;
            }
            self.mode(&mode.label)?;
        }
        if let Some(tone) = &self.calibration_tone {
            positive(tone.frequency_hz, "calibration_tone.frequency_hz")?;
            positive(tone.power_hz2, "calibration_tone.power_hz2")?;
        }
        if let Some(c) = &self.campaign {
            self.mode(&c.mode)?;
            positive(c.f_start_hz, "campaign.f_start_hz")?;
            positive(c.f_step_hz, "campaign.f_step_hz")?;
            positive(c.raw_scale, "campaign.raw_scale")?;
            if !(c.f_stop_hz > c.f_start_hz) {
                return Err(IoError::Config(
                    "campaign.f_stop_hz must exceed f_start_hz".into(),
                ));
            }
            if c.n_averages == 0 {
                return Err(IoError::Config(
                    "campaign.n_averages must be at least 1".into(),
                ));
            }
            match (&c.gamma_opt_hz, &c.input_power_w) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(IoError::Config(
                        "campaign needs exactly one of gamma_opt_hz, input_power_w".into(),
                    ))
                }
            }
            c.background.model()?;
        }
        Ok(())
    }

    /// Laser frequency ν_L, Hz, from either field.
    pub fn laser_frequency_hz(&self) -> Option<f64> {
        self.cavity
            .laser_frequency_hz
            .or(self.cavity.laser_wavelength_m.map(|l| SPEED_OF_LIGHT / l))
    }

    pub fn cavity_spec(&self) -> Result<CavitySpec> {
        let mut cavity = CavitySpec::new(
            hz_to_angular(self.cavity.kappa_hz),
            hz_to_angular(self.cavity.detuning_hz),
        )?;
        if let Some(l) = self.cavity.cavity_length_m {
            cavity = cavity.with_length(l)?;
        }
        if let Some(nu) = self.laser_frequency_hz() {
            cavity = cavity.with_laser_frequency(nu)?;
        }
        cavity.input_transmission_ppm = self.cavity.input_transmission_ppm;
        Ok(cavity)
    }

    pub fn mode_config(&self, label: &str) -> Result<&ModeConfig> {
        self.modes.iter().find(|m| m.label == label).ok_or_else(|| {
            let known: Vec<&str> = self.modes.iter().map(|m| m.label.as_str()).collect();
            IoError::Config(format!("no mode `{label}`; known: {}", known.join(", ")))
        })
    }

    /// The named mode, or the only one when `label` is `None`.
    pub fn select_mode(&self, label: Option<&str>) -> Result<&ModeConfig> {
        match label {
            Some(l) => self.mode_config(l),
            None if self.modes.len() == 1 => Ok(&self.modes[0]),
            None => Err(IoError::Config(
                "several modes configured; choose one".into(),
            )),
        }
    }

    pub fn mode(&self, label: &str) -> Result<MechMode> {
        let m = self.mode_config(label)?;
        Ok(MechMode::from_supplied(
            m.label.clone(),
            hz_to_angular(m.frequency_hz),
            m.linewidth_hz.map(hz_to_angular),
            m.q_factor,
            m.temperature_k,
        )?)
    }

    /// g₀ of the named mode, rad/s.
    pub fn g0(&self, label: &str) -> Result<f64> {
        self.mode_config(label)?
            .g0_hz
            .map(hz_to_angular)
            .ok_or(IoError::MissingField("g0_hz"))
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            theta_lo: self.detection.theta_lo_rad,
            probe_detuning: hz_to_angular(self.detection.probe_detuning_hz),
            probe_kappa: hz_to_angular(self.detection.probe_kappa_hz),
        }
    }

    /// Excess noise seen by the named mode; zero when none is configured.
    pub fn laser_noise(&self, label: &str) -> Result<LaserNoise> {
        let Some(noise) = &self.noise else {
            return Ok(LaserNoise::default());
        };
        let omega = hz_to_angular(self.mode_config(label)?.frequency_hz);
        let s_phi = match (noise.s_phi_phi_rad2_per_hz, noise.s_nu_nu_hz2_per_hz) {
            (Some(_), Some(_)) => {
                return Err(IoError::Config(
                    "give phase noise as either s_phi_phi or s_nu_nu, not both".into(),
                ))
            }
            (Some(p), None) => p,
            (None, Some(nu)) => phase_noise_from_frequency(nu, omega),
            (None, None) => 0.0,
        };
        Ok(LaserNoise::new(s_phi, noise.s_eps_eps_per_hz)?)
    }

    /// Same configuration at another detuning Δ/2π.
    pub fn with_detuning_hz(&self, detuning_hz: f64) -> Self {
        let mut out = self.clone();
        out.cavity.detuning_hz = detuning_hz;
        out
    }
}
