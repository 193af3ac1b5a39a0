use num_complex::Complex64;

use super::{
    require, require_finite, CavitySpec, Drive, DriveField, MechMode, PhysicsError, Result,
};

/// Mechanical susceptibility χ_m(ω) = 1/(−i(ω−Ω_m) + Γ_m/2).
pub fn chi_m(omega: f64, mode: &MechMode) -> Complex64 {
    Complex64::new(mode.gamma_m / 2.0, -(omega - mode.omega_m)).inv()
}

/// Cavity susceptibility χ_c(ω) = 1/(−i(ω+Δ) + κ/2).
pub fn chi_c(omega: f64, cavity: &CavitySpec) -> Complex64 {
    Complex64::new(cavity.kappa / 2.0, -(omega + cavity.detuning)).inv()
}

/// χ_c(Ω_m) − χ_c*(−Ω_m), the sideband-asymmetry factor that sets both the
/// optical damping (real part) and the optical spring (imaginary part).
pub fn damping_response(cavity: &CavitySpec, omega_m: f64) -> Complex64 {
    chi_c(omega_m, cavity) - chi_c(-omega_m, cavity).conj()
}

/// Intracavity mean field α = √κ χ_c(0) α₀ for an input flux |α₀|².
pub fn intracavity_mean_field(cavity: &CavitySpec, flux: f64) -> Result<Complex64> {
    require_finite(flux, "flux")?;
    require(flux >= 0.0, "flux", "must be non-negative")?;
    Ok(chi_c(0.0, cavity) * (cavity.kappa.sqrt() * flux.sqrt()))
}

/// Intracavity photon number |α|² implied by a drive.
pub fn intracavity_photons(
    cavity: &CavitySpec,
    mode: &MechMode,
    drive: &DriveField,
) -> Result<f64> {
    match drive.drive {
        Drive::PhotonFlux(flux) => Ok(intracavity_mean_field(cavity, flux)?.norm_sqr()),
        Drive::OpticalDamping(gamma_opt) => {
            if gamma_opt == 0.0 {
                return Ok(0.0);
            }
            let re = damping_response(cavity, mode.omega_m).re;
            if re == 0.0 {
                return Err(PhysicsError::FactorUndefined);
            }
            let photons = gamma_opt / (2.0 * drive.g0 * drive.g0 * re);
            require(
                photons >= 0.0,
                "gamma_opt",
                "sign incompatible with detuning",
            )?;
            Ok(photons)
        }
    }
}

/// Optical damping Γ_opt = 2 g₀² |α|² Re[χ_c(Ω_m) − χ_c*(−Ω_m)].
pub fn optical_damping(cavity: &CavitySpec, mode: &MechMode, drive: &DriveField) -> Result<f64> {
    match drive.drive {
        Drive::OpticalDamping(gamma_opt) => Ok(gamma_opt),
        Drive::PhotonFlux(_) => {
            let photons = intracavity_photons(cavity, mode, drive)?;
            Ok(2.0 * drive.g0 * drive.g0 * photons * damping_response(cavity, mode.omega_m).re)
        }
    }
}

/// Effective resonance Ω_eff = Ω_m + g₀² |α|² Im[χ_c(Ω_m) − χ_c*(−Ω_m)].
pub fn spring_shift(cavity: &CavitySpec, mode: &MechMode, drive: &DriveField) -> Result<f64> {
    let photons = intracavity_photons(cavity, mode, drive)?;
    Ok(mode.omega_m + drive.g0 * drive.g0 * photons * damping_response(cavity, mode.omega_m).im)
}

/// Input photon flux that yields the requested Γ_opt (closed-form inverse
/// of [`optical_damping`]).
pub fn photon_flux_for_damping(
    cavity: &CavitySpec,
    mode: &MechMode,
    g0: f64,
    gamma_opt: f64,
) -> Result<f64> {
    require(g0.is_finite() && g0 > 0.0, "g0", "must be positive")?;
    require_finite(gamma_opt, "gamma_opt")?;
    let re = damping_response(cavity, mode.omega_m).re;
    if re == 0.0 {
        return Err(PhysicsError::FactorUndefined);
    }
    let chi0 = chi_c(0.0, cavity).norm_sqr();
    let flux = gamma_opt / (2.0 * g0 * g0 * cavity.kappa * chi0 * re);
    require(flux >= 0.0, "gamma_opt", "sign incompatible with detuning")?;
    Ok(flux)
}

/// θ = arg[χ_c(Ω_m) − χ_c*(−Ω_m)], in (−π, π].
pub fn sideband_angle(cavity: &CavitySpec, omega_m: f64) -> Result<f64> {
    let x = damping_response(cavity, omega_m);
    let scale = chi_c(omega_m, cavity).norm() + chi_c(-omega_m, cavity).norm();
    if !(x.norm() > 1e-14 * scale) {
        return Err(PhysicsError::AngleUndefined);
    }
    Ok(x.im.atan2(x.re))
}

/// Amplitude-noise transduction factor
/// A = |χ_c*(0)χ_c(Ω_m) + χ_c(0)χ_c*(−Ω_m)| / (Ω_m |χ_c(0)|² Re[χ_c(Ω_m) − χ_c*(−Ω_m)]).
pub fn amplitude_factor(cavity: &CavitySpec, omega_m: f64) -> Result<f64> {
    let chi0 = chi_c(0.0, cavity);
    let plus = chi_c(omega_m, cavity);
    let minus_conj = chi_c(-omega_m, cavity).conj();
    let re = (plus - minus_conj).re;
    let scale = plus.norm() + minus_conj.norm();
    if !(re.abs() > 1e-14 * scale) {
        return Err(PhysicsError::FactorUndefined);
    }
    let numerator = (chi0.conj() * plus + chi0 * minus_conj).norm();
    Ok(numerator / (omega_m * chi0.norm_sqr() * re))
}
