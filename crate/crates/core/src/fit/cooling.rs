use serde::{Deserialize, Serialize};

use super::{FitError, Measured, Result};
use crate::physics::{thermal_occupation, MechMode};
use std::f64::consts::TAU;

/// One peak of a cooling series. Zero `gamma_sigma` treats the width as
/// exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoolingPoint {
    /// Γ_eff, rad/s.
    pub gamma_eff: f64,
    /// a_eff, Hz².
    pub a_eff: f64,
    pub sigma: f64,
    #[serde(default)]
    pub gamma_sigma: f64,
    /// cov(a_eff, Γ_eff) from the lineshape fit.
    #[serde(default)]
    pub covariance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingCurveResult {
    /// Coefficient of 1/Γ_eff, Hz²·rad/s.
    pub b1: Measured,
    /// Coefficient of Γ_eff, Hz²·s/rad.
    pub b2: Measured,
    pub covariance: [[f64; 2]; 2],
    pub reduced_chi2: f64,
    pub dof: usize,
    /// Single-photon coupling g₀, rad/s.
    pub g0: Measured,
    pub n_min: Measured,
    /// Optimal width Γ_min, rad/s.
    pub gamma_min: Measured,
    /// Combined excess noise S_φφ/cos²θ + A²S_εε, 1/Hz.
    pub s_eff: Measured,
    pub n_th: f64,
    /// k in a_eff = b₁(1/Γ_eff + k) + b₂·Γ_eff, s/rad.
    pub offset_coefficient: f64,
    pub warnings: Vec<String>,
}

impl CoolingCurveResult {
    pub fn evaluate(&self, gamma_eff: f64) -> f64 {
        self.b1.value * (1.0 / gamma_eff + self.offset_coefficient) + self.b2.value * gamma_eff
    }
}

const EFFECTIVE_VARIANCE_ROUNDS: usize = 20;

/// Weighted normal equations for (b₁, b₂); returns the solution and the
/// upper triangle of the normal matrix.
fn weighted_solve(
    points: &[CoolingPoint],
    variances: &[f64],
    k: f64,
) -> Result<(f64, f64, [f64; 3])> {
    let (mut s11, mut s12, mut s22, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, v) in points.iter().zip(variances) {
        let w = 1.0 / v;
        let (x, z) = (1.0 / p.gamma_eff + k, p.gamma_eff);
        s11 += w * x * x;
        s12 += w * x * z;
        s22 += w * z * z;
        y1 += w * x * p.a_eff;
        y2 += w * z * p.a_eff;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det > 1e-12 * s11 * s22) {
        return Err(FitError::Degenerate);
    }
    Ok((
        (s22 * y1 - s12 * y2) / det,
        (s11 * y2 - s12 * y1) / det,
        [s11, s12, s22],
    ))
}

/// Weighted fit of a_eff = b₁/Γ_eff + b₂·Γ_eff and the quantities derived
/// from it for `mode`: g₀ = 2π√(b₁/2Γ_m n_th), Γ_min = √(b₁/b₂),
/// n_min = 2Γ_m n_th √(b₂/b₁). Width errors are folded in as effective
/// variances; the covariance is inflated by the reduced χ² when it exceeds
/// one.
///
/// `floor_occupancy` is the part of n_eff that does not fall with Γ_eff,
/// n_ba + ½. It adds the constant 2g₀²·floor = b₁·floor/(Γ_m n_th) to the
/// curve; zero gives the bare two-term form.
pub fn fit_cooling_curve(
    points: &[CoolingPoint],
    mode: &MechMode,
    floor_occupancy: f64,
) -> Result<CoolingCurveResult> {
    if points.len() < 2 {
        return Err(FitError::InsufficientData {
            points: points.len(),
            params: 2,
        });
    }
    for (i, p) in points.iter().enumerate() {
        let ok = p.gamma_eff.is_finite()
            && p.gamma_eff > 0.0
            && p.a_eff.is_finite()
            && p.sigma.is_finite()
            && p.sigma > 0.0;
        if !ok {
            return Err(FitError::InvalidInput(format!(
                "cooling point {i} needs Γ_eff > 0, finite a_eff and σ > 0"
            )));
        }
    }
    if !(floor_occupancy.is_finite() && floor_occupancy >= 0.0) {
        return Err(FitError::InvalidInput(
            "floor occupancy must be finite and non-negative".into(),
        ));
    }
    let n_th = thermal_occupation(mode)?;
    let thermal = mode.gamma_m * n_th;
    let k = floor_occupancy / thermal;
    // effective variance: the error in Γ_eff enters through the local slope
    let mut slope = vec![0.0; points.len()];
    let mut solution: Option<(f64, f64, [f64; 3], Vec<f64>)> = None;
    for _ in 0..EFFECTIVE_VARIANCE_ROUNDS {
        let variances: Vec<f64> = points
            .iter()
            .zip(&slope)
            .map(|(p, s)| {
                p.sigma * p.sigma + s * s * p.gamma_sigma * p.gamma_sigma - 2.0 * s * p.covariance
            })
            .collect();
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(FitError::InvalidInput(
                "cooling point covariance is not positive definite".into(),
            ));
        }
        let (b1, b2, s) = weighted_solve(points, &variances, k)?;
        let settled = solution.as_ref().is_some_and(|(c1, c2, ..)| {
            (b1 - c1).abs() <= 1e-12 * b1.abs() && (b2 - c2).abs() <= 1e-12 * b2.abs()
        });
        solution = Some((b1, b2, s, variances));
        for (sl, p) in slope.iter_mut().zip(points) {
            *sl = b2 - b1 / (p.gamma_eff * p.gamma_eff);
        }
        if settled || points.iter().all(|p| p.gamma_sigma == 0.0) {
            break;
        }
    }
    let (b1, b2, [s11, s12, s22], variances) = solution.expect("at least one round");
    let det = s11 * s22 - s12 * s12;
    let chi2: f64 = points
        .iter()
        .zip(&variances)
        .map(|(p, v)| (p.a_eff - b1 * (1.0 / p.gamma_eff + k) - b2 * p.gamma_eff).powi(2) / v)
        .sum();
    let dof = points.len() - 2;
    let reduced_chi2 = if dof > 0 { chi2 / dof as f64 } else { 0.0 };
    let scale = if dof > 0 { reduced_chi2.max(1.0) } else { 1.0 };
    let cov = [
        [s22 / det * scale, -s12 / det * scale],
        [-s12 / det * scale, s11 / det * scale],
    ];
    if b1 <= 0.0 || b2 <= 0.0 {
        return Err(FitError::Inconsistent(format!(
            "b1 = {b1:.4e}, b2 = {b2:.4e}; both must be positive"
        )));
    }

    let (v1, v2, c12) = (
        cov[0][0] / (b1 * b1),
        cov[1][1] / (b2 * b2),
        cov[0][1] / (b1 * b2),
    );
    let g0 = TAU * (b1 / (2.0 * thermal)).sqrt();
    let ratio_rel = 0.5 * (v1 + v2 - 2.0 * c12).max(0.0).sqrt();
    let n_min = 2.0 * thermal * (b2 / b1).sqrt();
    let gamma_min = (b1 / b2).sqrt();
    let s_eff = 2.0 * TAU * TAU * b2 / (mode.omega_m * mode.omega_m);

    let mut warnings = Vec::new();
    let weak: Vec<String> = points
        .iter()
        .filter(|p| p.gamma_eff < 10.0 * mode.gamma_m)
        .map(|p| format!("{:.4e}", p.gamma_eff))
        .collect();
    if !weak.is_empty() {
        warnings.push(format!(
            "Γ_eff below 10 Γ_m at [{}] rad/s; Γ_opt ≈ Γ_eff assumption strained",
            weak.join(", ")
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(CoolingCurveResult {
        b1: Measured::new(b1, cov[0][0].sqrt()),
        b2: Measured::new(b2, cov[1][1].sqrt()),
        covariance: cov,
        reduced_chi2,
        dof,
        g0: Measured::new(g0, 0.5 * g0 * v1.sqrt()),
        n_min: Measured::new(n_min, n_min * ratio_rel),
        gamma_min: Measured::new(gamma_min, gamma_min * ratio_rel),
        s_eff: Measured::new(s_eff, s_eff * v2.sqrt()),
        n_th,
        offset_coefficient: k,
        warnings,
    })
}
