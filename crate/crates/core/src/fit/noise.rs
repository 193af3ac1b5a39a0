use serde::{Deserialize, Serialize};

use super::cooling::CoolingCurveResult;
use super::{FitError, Measured, Result};
use crate::physics::{amplitude_factor, sideband_angle, CavitySpec, MechMode};

/// Below this |sin 2θ| the dispersive weight carries no usable information.
pub const MIN_SIN_2THETA: f64 = 0.05;
/// Largest uncertainty on the phase fraction that still allows a verdict.
pub const MAX_FRACTION_SIGMA: f64 = 0.25;
/// Separation, in sigmas, needed to call a mixture.
pub const MIXED_Z: f64 = 3.0;

/// Dispersive weight of one peak against its optical damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersivePoint {
    /// Γ_opt = Γ_eff − Γ_m, rad/s.
    pub gamma_opt: f64,
    pub a3: f64,
    pub sigma: f64,
}

/// Weighted least-squares slope of a₃ against Γ_opt through the origin,
/// with the uncertainty inflated by the reduced χ² when it exceeds one.
pub fn dispersive_slope(points: &[DispersivePoint]) -> Result<Measured> {
    if points.is_empty() {
        return Err(FitError::InsufficientData {
            points: 0,
            params: 1,
        });
    }
    if points.iter().any(|p| {
        !(p.sigma > 0.0 && p.sigma.is_finite() && p.gamma_opt.is_finite() && p.a3.is_finite())
    }) {
        return Err(FitError::InvalidInput(
            "dispersive points need finite values and σ > 0".into(),
        ));
    }
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in points {
        let w = 1.0 / (p.sigma * p.sigma);
        sxx += w * p.gamma_opt * p.gamma_opt;
        sxy += w * p.gamma_opt * p.a3;
    }
    if sxx <= 0.0 {
        return Err(FitError::Degenerate);
    }
    let slope = sxy / sxx;
    let dof = points.len() - 1;
    let scale = if dof > 0 {
        points
            .iter()
            .map(|p| ((p.a3 - slope * p.gamma_opt) / p.sigma).powi(2))
            .sum::<f64>()
            / dof as f64
    } else {
        1.0
    };
    Ok(Measured::new(slope, (scale.max(1.0) / sxx).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDominance {
    PhaseDominated,
    AmplitudeDominated,
    Mixed,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDiscrimination {
    pub dominance: NoiseDominance,
    /// Share of b₂ explained by phase noise, slope/(b₂ sin 2θ).
    pub phase_fraction: Option<Measured>,
    /// b₂Γ_eff/a₃ as estimated from the series.
    pub ratio: Option<Measured>,
    /// Value of that ratio for pure phase noise, 1/sin 2θ.
    pub phase_only_ratio: f64,
    pub note: Option<String>,
}

/// Compares the Γ-linear part of the cooling curve with the dispersive
/// weight. Phase noise alone makes b₂Γ_eff/a₃ equal to 1/sin 2θ; a larger b₂
/// points to amplitude noise.
pub fn discriminate_noise(b2: Measured, slope: Measured, theta: f64) -> NoiseDiscrimination {
    let sin2 = (2.0 * theta).sin();
    let phase_only_ratio = 1.0 / sin2;
    let ratio = (slope.value != 0.0).then(|| {
        let r = b2.value / slope.value;
        Measured::new(
            r,
            r.abs() * (b2.relative().powi(2) + slope.relative().powi(2)).sqrt(),
        )
    });
    let undecided = |note: String| NoiseDiscrimination {
        dominance: NoiseDominance::Indeterminate,
        phase_fraction: None,
        ratio,
        phase_only_ratio,
        note: Some(note),
    };
    if sin2.abs() < MIN_SIN_2THETA {
        return undecided(format!(
            "|sin 2θ| = {:.3} too small to weigh the dispersive term",
            sin2.abs()
        ));
    }
    if b2.value <= 0.0 {
        return undecided("b2 is not positive".into());
    }
    let scale = b2.value * sin2;
    let f = slope.value / scale;
    let sigma = ((slope.sigma / scale).powi(2) + (f * b2.relative()).powi(2)).sqrt();
    let fraction = Measured::new(f, sigma);
    if !(sigma <= MAX_FRACTION_SIGMA) {
        let mut out = undecided(format!("phase fraction {fraction} not resolved"));
        out.phase_fraction = Some(fraction);
        return out;
    }
    let z_phase = (f - 1.0).abs() / sigma;
    let z_amp = f.abs() / sigma;
    let dominance = if f >= 1.0 {
        NoiseDominance::PhaseDominated
    } else if f <= 0.0 {
        NoiseDominance::AmplitudeDominated
    } else if z_phase > MIXED_Z && z_amp > MIXED_Z {
        NoiseDominance::Mixed
    } else if z_phase <= z_amp {
        NoiseDominance::PhaseDominated
    } else {
        NoiseDominance::AmplitudeDominated
    };
    NoiseDiscrimination {
        dominance,
        phase_fraction: Some(fraction),
        ratio,
        phase_only_ratio,
        note: None,
    }
}

/// A PSD value, or an upper limit on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub value: f64,
    pub sigma: f64,
    pub upper_limit: bool,
}

impl PsdEstimate {
    fn measured(m: Measured) -> Self {
        Self {
            value: m.value,
            sigma: m.sigma,
            upper_limit: false,
        }
    }

    fn limit(value: f64) -> Self {
        Self {
            value,
            sigma: 0.0,
            upper_limit: true,
        }
    }

    pub fn as_measured(&self) -> Measured {
        Measured::new(self.value, self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseExtraction {
    pub dominance: NoiseDominance,
    /// rad²/Hz.
    pub s_phi_phi: PsdEstimate,
    /// 1/Hz.
    pub s_eps_eps: PsdEstimate,
    /// Hz²/Hz.
    pub s_nu_nu: PsdEstimate,
    pub theta: f64,
    pub amplitude_factor: f64,
}

/// Splits the combined excess noise S_φφ/cos²θ + A²S_εε found by the
/// cooling-curve fit between phase and amplitude noise. The subdominant
/// source gets a two-sigma upper limit on its share.
pub fn extract_noise_psd(
    result: &CoolingCurveResult,
    mode: &MechMode,
    cavity: &CavitySpec,
    discrimination: &NoiseDiscrimination,
) -> Result<NoiseExtraction> {
    let theta = sideband_angle(cavity, mode.omega_m)?;
    let a = amplitude_factor(cavity, mode.omega_m)?;
    let cos2 = theta.cos().powi(2);
    let a2 = a * a;
    let s = result.s_eff;
    let phase_full = Measured::new(s.value * cos2, s.sigma * cos2);
    let amp_full = Measured::new(s.value / a2, s.sigma / a2);
    let f = discrimination.phase_fraction;
    // two-sigma bound on the subdominant share of S_eff
    let share_limit = |share: Option<f64>| {
        let bound = match (share, f) {
            (Some(x), Some(f)) => (x + 2.0 * f.sigma).clamp(0.0, 1.0),
            _ => 1.0,
        };
        bound * (s.value + 2.0 * s.sigma)
    };
    let (s_phi, s_eps) = match discrimination.dominance {
        NoiseDominance::PhaseDominated => (
            PsdEstimate::measured(phase_full),
            PsdEstimate::limit(share_limit(f.map(|f| (1.0 - f.value).max(0.0))) / a2),
        ),
        NoiseDominance::AmplitudeDominated => (
            PsdEstimate::limit(share_limit(f.map(|f| f.value.max(0.0))) * cos2),
            PsdEstimate::measured(amp_full),
        ),
        NoiseDominance::Mixed => {
            let f = f.ok_or_else(|| {
                FitError::InvalidInput("mixed verdict without a phase fraction".into())
            })?;
            let split = |share: f64, base: Measured| {
                let value = share * base.value;
                let sigma = ((f.sigma * base.value).powi(2) + (share * base.sigma).powi(2)).sqrt();
                PsdEstimate::measured(Measured::new(value, sigma))
            };
            (split(f.value, phase_full), split(1.0 - f.value, amp_full))
        }
        NoiseDominance::Indeterminate => (
            PsdEstimate::limit(phase_full.value + 2.0 * phase_full.sigma),
            PsdEstimate::limit(amp_full.value + 2.0 * amp_full.sigma),
        ),
    };
    let nu2 = (mode.omega_m / std::f64::consts::TAU).powi(2);
    let s_nu = PsdEstimate {
        value: s_phi.value * nu2,
        sigma: s_phi.sigma * nu2,
        upper_limit: s_phi.upper_limit,
    };
    Ok(NoiseExtraction {
        dominance: discrimination.dominance,
        s_phi_phi: s_phi,
        s_eps_eps: s_eps,
        s_nu_nu: s_nu,
        theta,
        amplitude_factor: a,
    })
}
