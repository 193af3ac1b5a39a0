use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json, Result};
use crate::fit::{
    BackgroundFit, CoolingCurveResult, Measured, NoiseDiscrimination, NoiseExtraction,
    PeakFitResult, PsdEstimate,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub input_files: Vec<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(input_files: Vec<String>, seed: Option<u64>) -> Self {
        Self {
            input_files,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Analysis of a single spectrum: one cooling-beam setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub source: Option<String>,
    pub mode: String,
    /// Spectrum scale found from the calibration tone, if one was used.
    pub calibration_scale: Option<f64>,
    pub background: Option<BackgroundFit>,
    pub fit: PeakFitResult,
    /// Peak area (g₀/2π)²(2n_eff + 1), Hz².
    pub a_eff: Measured,
    /// Γ_eff, rad/s.
    pub gamma_eff: Measured,
    /// cov(a_eff, Γ_eff), Hz²·rad/s.
    #[serde(default)]
    pub a_eff_gamma_covariance: f64,
    /// Ω_eff, rad/s.
    pub omega_eff: Measured,
    /// Γ_opt = Γ_eff − Γ_m, rad/s.
    pub gamma_opt: Measured,
    /// Dispersive weight a₃ of the joint fit, Hz².
    pub a3: Measured,
    /// Ω_eff/Γ_eff.
    pub q_eff: f64,
    /// Occupancy from the area, when g₀ is known.
    pub n_eff: Option<Measured>,
    pub t_eff_k: Option<f64>,
}

/// Cooling-curve analysis over a series of peaks of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingReport {
    pub mode: String,
    pub curve: CoolingCurveResult,
    /// Slope of a₃ against Γ_opt, Hz²·s/rad.
    pub dispersive_slope: Option<Measured>,
    pub discrimination: Option<NoiseDiscrimination>,
    pub noise: Option<NoiseExtraction>,
    /// Cavity-length noise implied by the frequency noise, m²/Hz.
    pub s_ll_m2_per_hz: Option<PsdEstimate>,
    /// Effective temperature at the optimum, K.
    pub t_eff_min_k: Measured,
    /// Ω_m/Γ_min.
    pub q_eff_min: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub peaks: Vec<PeakRecord>,
    pub cooling: Option<CoolingReport>,
    pub provenance: Provenance,
}

impl FitReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
