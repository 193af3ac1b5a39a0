use serde::{Deserialize, Serialize};

use super::detection::{detection_filter_c, DetectionConfig};
use super::lineshape::{dispersive_shape, lorentzian_shape, LineshapeCoeffs, ONE_SIDED_FOLD};
use super::{FrequencyGrid, Result, Spectrum, Units};
use crate::physics::{
    effective_occupancy, sideband_angle, CavitySpec, DriveField, LaserNoise, MechMode,
    OccupancyBudget,
};

/// Everything the forward model needs for one cooling-beam setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInputs {
    pub mode: MechMode,
    pub cavity: CavitySpec,
    pub drive: DriveField,
    pub noise: LaserNoise,
    pub detection: DetectionConfig,
    /// Flat level c from detection noise that never entered the cavity.
    pub floor: f64,
}

/// Model quantities behind a synthesized peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTruth {
    pub budget: OccupancyBudget,
    /// Only defined away from zero detuning.
    pub theta: Option<f64>,
    pub coeffs: LineshapeCoeffs,
    /// (g₀/2π)²(2 n_eff + 1), Hz².
    pub a_eff: f64,
}

impl ModelInputs {
    fn g_hz_sqr(&self) -> f64 {
        (self.drive.g0 / std::f64::consts::TAU).powi(2)
    }

    pub fn truth(&self) -> Result<ModelTruth> {
        let budget = effective_occupancy(&self.mode, &self.cavity, &self.drive, &self.noise)?;
        let theta = sideband_angle(&self.cavity, self.mode.omega_m).ok();
        let g2 = self.g_hz_sqr();
        let (cos, sin) = theta.map(|t| (t.cos(), t.sin())).unwrap_or((1.0, 0.0));
        let n_phi = budget.n_exc_phase;
        let coeffs = LineshapeCoeffs {
            a0: self.floor,
            a1: 0.0,
            a2: 2.0 * g2 * (budget.n_eff + 0.5) - 4.0 * g2 * n_phi * cos * cos,
            a3: 4.0 * g2 * n_phi * cos * sin,
            omega_eff: budget.omega_eff,
            gamma_eff: budget.gamma_eff,
        };
        Ok(ModelTruth {
            budget,
            theta,
            coeffs,
            a_eff: g2 * (2.0 * budget.n_eff + 1.0),
        })
    }
}

/// Output spectrum of the detected quadrature,
/// c + |C|²[2g²(n_eff + ½)L − 2g² n_exc,φ · 2cosθ(cosθ L − sinθ D)],
/// folded onto positive frequencies. Only the phase-noise share of the excess
/// occupancy is correlated with the detected phase and produces the
/// interference term.
pub fn output_psd(grid: &FrequencyGrid, inputs: &ModelInputs) -> Result<Spectrum> {
    let truth = inputs.truth()?;
    let budget = &truth.budget;
    if budget.gamma_eff > 0.1 * inputs.cavity.kappa.min(inputs.mode.omega_m) {
        log::warn!(
            "weak-coupling approximation strained: Γ_eff = {:.3e} rad/s vs κ = {:.3e}, Ω_m = {:.3e}",
            budget.gamma_eff,
            inputs.cavity.kappa,
            inputs.mode.omega_m
        );
    }
    let bins_per_width = budget.gamma_eff / (std::f64::consts::TAU * grid.f_step);
    if bins_per_width < 10.0 {
        log::warn!("only {bins_per_width:.1} bins per peak width; lineshape is under-resolved");
    }

    let g2 = inputs.g_hz_sqr();
    let (cos, sin) = truth
        .theta
        .map(|t| (t.cos(), t.sin()))
        .unwrap_or((1.0, 0.0));
    let n_phi = budget.n_exc_phase;
    let values = (0..grid.len)
        .map(|i| {
            let omega = grid.angular(i);
            let c2 = detection_filter_c(omega, &inputs.detection).norm_sqr();
            let l = lorentzian_shape(omega, budget.omega_eff, budget.gamma_eff);
            let d = dispersive_shape(omega, budget.omega_eff, budget.gamma_eff);
            let bracket = 2.0 * g2 * (budget.n_eff + 0.5) * l
                - 2.0 * g2 * n_phi * 2.0 * cos * (cos * l - sin * d);
            inputs.floor + ONE_SIDED_FOLD * c2 * bracket
        })
        .collect();
    let mut spectrum = Spectrum::new(*grid, values, Units::NormalizedModel, 1)?;
    spectrum
        .metadata
        .insert("model".into(), "output_psd".into());
    Ok(spectrum)
}
