use serde::{Deserialize, Serialize};

use super::response::{amplitude_factor, optical_damping, sideband_angle, spring_shift};
use super::{
    require, require_finite, CavitySpec, DriveField, LaserNoise, MechMode, OccupancyBudget,
    PhysicsError, Result,
};
use crate::constants::{BOLTZMANN, HBAR};

/// Bath occupancy n_th = k_B T / (ħ Ω_m).
pub fn thermal_occupation(mode: &MechMode) -> Result<f64> {
    require_finite(mode.temperature, "temperature")?;
    require_finite(mode.omega_m, "omega_m")?;
    require(mode.omega_m > 0.0, "omega_m", "must be positive")?;
    Ok(BOLTZMANN * mode.temperature / (HBAR * mode.omega_m))
}

/// Quantum-backaction limit
/// n_ba = [((κ/2)² + (Δ−Ω_m)²) / ((κ/2)² + (Δ+Ω_m)²) − 1]⁻¹.
pub fn backaction_occupancy(cavity: &CavitySpec, omega_m: f64) -> Result<f64> {
    if !(cavity.detuning < 0.0) {
        return Err(PhysicsError::NonCoolingDetuning);
    }
    let k2 = (cavity.kappa / 2.0).powi(2);
    let anti_stokes = k2 + (cavity.detuning + omega_m).powi(2);
    let stokes = k2 + (cavity.detuning - omega_m).powi(2);
    // stokes/anti_stokes − 1 written without cancellation
    let excess = (stokes - anti_stokes) / anti_stokes;
    Ok(1.0 / excess)
}

/// Phase and amplitude parts of the excess-noise occupancy,
/// n_exc = Γ_opt Ω_m²/(4 g₀²) (S_φφ/cos²θ + A² S_εε).
pub fn excess_occupancy_parts(
    gamma_opt: f64,
    g0: f64,
    omega_m: f64,
    theta: f64,
    a_factor: f64,
    noise: &LaserNoise,
) -> Result<(f64, f64)> {
    require(
        gamma_opt.is_finite() && gamma_opt >= 0.0,
        "gamma_opt",
        "must be non-negative",
    )?;
    require(g0.is_finite() && g0 > 0.0, "g0", "must be positive")?;
    let cos = theta.cos();
    if cos.abs() < 1e-12 {
        return Err(PhysicsError::PhaseNoiseDivergence);
    }
    let prefactor = gamma_opt * omega_m * omega_m / (4.0 * g0 * g0);
    let phase = prefactor * noise.s_phi_phi / (cos * cos);
    let amplitude = prefactor * a_factor * a_factor * noise.s_eps_eps;
    Ok((phase, amplitude))
}

pub fn excess_occupancy(
    gamma_opt: f64,
    g0: f64,
    omega_m: f64,
    theta: f64,
    a_factor: f64,
    noise: &LaserNoise,
) -> Result<f64> {
    let (phase, amplitude) =
        excess_occupancy_parts(gamma_opt, g0, omega_m, theta, a_factor, noise)?;
    Ok(phase + amplitude)
}

/// Full occupancy budget,
/// n_eff = (Γ_m/Γ_eff) n_th + (Γ_opt/Γ_eff)(n_ba + n_exc).
pub fn effective_occupancy(
    mode: &MechMode,
    cavity: &CavitySpec,
    drive: &DriveField,
    noise: &LaserNoise,
) -> Result<OccupancyBudget> {
    mode.validate()?;
    cavity.validate()?;
    let n_th = thermal_occupation(mode)?;
    let gamma_opt = optical_damping(cavity, mode, drive)?;
    let gamma_eff = mode.gamma_m + gamma_opt;
    if !(gamma_eff > 0.0) {
        return Err(PhysicsError::Unstable { gamma_eff });
    }
    let omega_eff = spring_shift(cavity, mode, drive)?;

    let (n_ba, n_exc_phase, n_exc_amplitude) = if gamma_opt == 0.0 {
        let n_ba = if cavity.detuning < 0.0 {
            backaction_occupancy(cavity, mode.omega_m)?
        } else {
            0.0
        };
        (n_ba, 0.0, 0.0)
    } else {
        let n_ba = backaction_occupancy(cavity, mode.omega_m)?;
        let theta = sideband_angle(cavity, mode.omega_m)?;
        let a = amplitude_factor(cavity, mode.omega_m)?;
        let (p, amp) = excess_occupancy_parts(gamma_opt, drive.g0, mode.omega_m, theta, a, noise)?;
        (n_ba, p, amp)
    };
    let n_exc = n_exc_phase + n_exc_amplitude;
    let n_eff = (mode.gamma_m * n_th + gamma_opt * (n_ba + n_exc)) / gamma_eff;

    Ok(OccupancyBudget {
        n_th,
        n_ba,
        n_exc,
        n_exc_phase,
        n_exc_amplitude,
        n_eff,
        gamma_opt,
        gamma_eff,
        omega_eff,
    })
}

/// Optimum of the cooling curve: minimum occupancy and the optical width at
/// which it is reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinOccupancy {
    pub n_min: f64,
    /// rad/s
    pub gamma_min: f64,
}

/// S_φφ/cos²θ + A² S_εε at the given geometry.
pub(crate) fn effective_noise(
    cavity: &CavitySpec,
    omega_m: f64,
    noise: &LaserNoise,
) -> Result<f64> {
    let theta = sideband_angle(cavity, omega_m)?;
    let cos = theta.cos();
    if cos.abs() < 1e-12 {
        return Err(PhysicsError::PhaseNoiseDivergence);
    }
    let a = amplitude_factor(cavity, omega_m)?;
    Ok(noise.s_phi_phi / (cos * cos) + a * a * noise.s_eps_eps)
}

/// n_min = (Ω_m √(Γ_m n_th)/g₀) √S and Γ_min = (2 g₀ √(Γ_m n_th)/Ω_m) / √S,
/// with S = S_φφ/cos²θ + A² S_εε.
pub fn min_occupancy(
    mode: &MechMode,
    cavity: &CavitySpec,
    g0: f64,
    noise: &LaserNoise,
) -> Result<MinOccupancy> {
    require(g0.is_finite() && g0 > 0.0, "g0", "must be positive")?;
    if noise.is_zero() {
        return Err(PhysicsError::NoFiniteOptimum);
    }
    let s = effective_noise(cavity, mode.omega_m, noise)?;
    let root = (mode.gamma_m * thermal_occupation(mode)?).sqrt();
    Ok(MinOccupancy {
        n_min: mode.omega_m * root / g0 * s.sqrt(),
        gamma_min: 2.0 * g0 * root / mode.omega_m / s.sqrt(),
    })
}

/// n_eff written around its optimum, 0.5 n_min (Γ_opt/Γ_min + Γ_min/Γ_opt) + n_ba.
/// Valid for Γ_opt ≫ Γ_m.
pub fn recast_occupancy(optimum: &MinOccupancy, gamma_opt: f64, n_ba: f64) -> f64 {
    let x = gamma_opt / optimum.gamma_min;
    0.5 * optimum.n_min * (x + 1.0 / x) + n_ba
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityRequirement {
    pub q_required: f64,
    pub q_current: f64,
    pub n_min_current: f64,
    /// Target already met at the current Q.
    pub no_op: bool,
}

/// Mechanical Q needed to bring n_min down to `target`, all else fixed.
/// Uses n_min ∝ √Γ_m = √(Ω_m/Q).
pub fn required_quality_factor(
    target: f64,
    mode: &MechMode,
    cavity: &CavitySpec,
    g0: f64,
    noise: &LaserNoise,
) -> Result<QualityRequirement> {
    require(
        target.is_finite() && target > 0.0,
        "target",
        "must be positive",
    )?;
    let current = min_occupancy(mode, cavity, g0, noise)?.n_min;
    let q_current = mode.q_factor();
    if target >= current {
        return Ok(QualityRequirement {
            q_required: q_current,
            q_current,
            n_min_current: current,
            no_op: true,
        });
    }
    Ok(QualityRequirement {
        q_required: q_current * (current / target).powi(2),
        q_current,
        n_min_current: current,
        no_op: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::hz_to_angular;

    fn khz(f: f64) -> f64 {
        hz_to_angular(f * 1e3)
    }

    fn mode(f_khz: f64, q: f64) -> MechMode {
        MechMode::from_q("m", khz(f_khz), q, 300.0).unwrap()
    }

    fn cavity(det_khz: f64) -> CavitySpec {
        CavitySpec::new(khz(204.0), khz(det_khz)).unwrap()
    }

    #[test]
    fn thermal_occupation_values() {
        let cold = MechMode::from_q("m", khz(256.0), 1e7, 0.0).unwrap();
        assert_eq!(thermal_occupation(&cold).unwrap(), 0.0);
        // k_B·300/(ħ·2π·256e3) and the same at 593 kHz, evaluated by hand
        let n1 = thermal_occupation(&mode(256.0, 1e7)).unwrap();
        let n2 = thermal_occupation(&mode(593.0, 1e7)).unwrap();
        assert!((n1 / 2.4418e7 - 1.0).abs() < 1e-3, "{n1}");
        assert!((n2 / 1.0541e7 - 1.0).abs() < 1e-3, "{n2}");
        let hot = MechMode::from_q("m", khz(256.0), 1e7, 600.0).unwrap();
        assert!(thermal_occupation(&hot).unwrap() > n1);
        assert!(n2 < n1);
    }

    #[test]
    fn thermal_occupation_rejects_nonfinite() {
        let mut m = mode(256.0, 1e7);
        m.temperature = f64::NAN;
        assert!(thermal_occupation(&m).is_err());
    }

    #[test]
    fn backaction_at_optimal_detuning() {
        let n = backaction_occupancy(&cavity(-256.0), khz(256.0)).unwrap();
        assert!((n - 0.0397).abs() < 1e-4, "{n}");
    }

    #[test]
    fn backaction_limits() {
        let omega = khz(256.0);
        let ratio = 1e-3;
        let cav = CavitySpec::new(omega * ratio, -omega).unwrap();
        let n = backaction_occupancy(&cav, omega).unwrap();
        let asym = (ratio / 4.0f64).powi(2);
        assert!((n / asym - 1.0).abs() < 1e-5);

        let near_zero = CavitySpec::new(khz(204.0), -1e-3).unwrap();
        assert!(backaction_occupancy(&near_zero, omega).unwrap() > 1e6);
        assert_eq!(
            backaction_occupancy(&cavity(0.0), omega),
            Err(PhysicsError::NonCoolingDetuning)
        );
        assert_eq!(
            backaction_occupancy(&cavity(100.0), omega),
            Err(PhysicsError::NonCoolingDetuning)
        );
    }

    #[test]
    fn excess_occupancy_linearity_and_zero() {
        let noise = LaserNoise::new(3e-13, 2e-14).unwrap();
        let f = |g: f64| excess_occupancy(g, 13.0, khz(256.0), -1.2, 6.9, &noise).unwrap();
        assert_eq!(
            excess_occupancy(1e4, 13.0, khz(256.0), -1.2, 6.9, &LaserNoise::default()).unwrap(),
            0.0
        );
        assert!((f(2e4) - 2.0 * f(1e4)).abs() < 1e-12 * f(2e4));
        assert_eq!(
            excess_occupancy(
                1e4,
                13.0,
                khz(256.0),
                std::f64::consts::FRAC_PI_2,
                1.0,
                &noise
            ),
            Err(PhysicsError::PhaseNoiseDivergence)
        );
    }

    #[test]
    fn uncooled_mode_stays_thermal() {
        let m = mode(256.0, 1.18e7);
        let drive = DriveField::from_damping(khz(2.1e-3), 0.0).unwrap();
        let noise = LaserNoise::new(3e-13, 0.0).unwrap();
        let b = effective_occupancy(&m, &cavity(-480.0), &drive, &noise).unwrap();
        assert_eq!(b.n_eff, b.n_th);
        assert_eq!(b.gamma_eff, m.gamma_m);
    }

    #[test]
    fn blue_drive_is_unstable() {
        let m = mode(256.0, 1.18e7);
        let drive = DriveField::from_flux(khz(2.1e-3), 1e17).unwrap();
        let err =
            effective_occupancy(&m, &cavity(480.0), &drive, &LaserNoise::default()).unwrap_err();
        assert!(matches!(err, PhysicsError::Unstable { .. }));
    }

    #[test]
    fn at_optimum_thermal_and_excess_split_evenly() {
        let m = mode(256.0, 1.18e7);
        let cav = cavity(-480.0);
        let g0 = khz(2.1e-3);
        let noise = LaserNoise::new(0.022 / 256e3f64.powi(2), 0.0).unwrap();
        let opt = min_occupancy(&m, &cav, g0, &noise).unwrap();
        let b = effective_occupancy(
            &m,
            &cav,
            &DriveField::from_damping(g0, opt.gamma_min).unwrap(),
            &noise,
        )
        .unwrap();
        let thermal = m.gamma_m / b.gamma_eff * b.n_th;
        let excess = b.gamma_opt / b.gamma_eff * b.n_exc;
        // equal shares up to the Γ_m/Γ_opt correction
        let tol = 2.0 * m.gamma_m / opt.gamma_min;
        assert!((thermal / (0.5 * opt.n_min) - 1.0).abs() < tol);
        assert!((excess / (0.5 * opt.n_min) - 1.0).abs() < tol);
    }

    #[test]
    fn recast_matches_budget() {
        let m = mode(256.0, 1.18e7);
        let cav = cavity(-480.0);
        let g0 = khz(2.1e-3);
        let noise = LaserNoise::new(3.4e-13, 1e-14).unwrap();
        let opt = min_occupancy(&m, &cav, g0, &noise).unwrap();
        let n_th = thermal_occupation(&m).unwrap();
        for k in 0..40 {
            let gamma_opt = opt.gamma_min * 10f64.powf(-1.5 + 3.0 * k as f64 / 39.0);
            let b = effective_occupancy(
                &m,
                &cav,
                &DriveField::from_damping(g0, gamma_opt).unwrap(),
                &noise,
            )
            .unwrap();
            let recast = recast_occupancy(&opt, gamma_opt, b.n_ba);
            // identical once Γ_eff is replaced by Γ_opt
            let approx = (m.gamma_m * n_th + gamma_opt * (b.n_ba + b.n_exc)) / gamma_opt;
            assert!((recast / approx - 1.0).abs() < 1e-12);
            assert!((recast / b.n_eff - 1.0).abs() <= 2.0 * m.gamma_m / gamma_opt);
        }
    }

    #[test]
    fn min_occupancy_identity_and_scaling() {
        let m = mode(593.0, 0.92e7);
        let cav = cavity(-480.0);
        let noise = LaserNoise::new(1e-14, 1.6e-14).unwrap();
        let g0 = khz(1.74e-3);
        let opt = min_occupancy(&m, &cav, g0, &noise).unwrap();
        let n_th = thermal_occupation(&m).unwrap();
        assert!((opt.n_min * opt.gamma_min / (2.0 * m.gamma_m * n_th) - 1.0).abs() < 1e-14);

        let better = m.with_q(4.0 * m.q_factor()).unwrap();
        let opt4 = min_occupancy(&better, &cav, g0, &noise).unwrap();
        assert!((opt.n_min / opt4.n_min - 2.0).abs() < 1e-12);

        assert_eq!(
            min_occupancy(&m, &cav, g0, &LaserNoise::default()),
            Err(PhysicsError::NoFiniteOptimum)
        );
    }

    #[test]
    fn quality_factor_scaling() {
        let m = mode(256.0, 1.18e7);
        let cav = cavity(-480.0);
        let g0 = khz(2.1e-3);
        let noise = LaserNoise::new(0.022 / 256e3f64.powi(2), 0.0).unwrap();
        let current = min_occupancy(&m, &cav, g0, &noise).unwrap().n_min;

        let same = required_quality_factor(current, &m, &cav, g0, &noise).unwrap();
        assert!(same.no_op);
        assert_eq!(same.q_required, m.q_factor());

        let one = required_quality_factor(1.0, &m, &cav, g0, &noise).unwrap();
        assert!(!one.no_op);
        assert!((one.q_required / (m.q_factor() * current * current) - 1.0).abs() < 1e-12);
        assert!(
            (one.q_required / 2.4e12 - 1.0).abs() < 0.02,
            "{}",
            one.q_required
        );

        let fifth = required_quality_factor(current / 5.0, &m, &cav, g0, &noise).unwrap();
        assert!((fifth.q_required / m.q_factor() - 25.0).abs() < 1e-9);
    }
}
