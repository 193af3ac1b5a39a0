//! Independent reference formulas for the integration tests. Written from
//! the defining expressions with plain complex arithmetic, sharing no code
//! with the library beyond the complex type.
#![allow(dead_code)]

use num_complex::Complex64;
use std::f64::consts::TAU;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const C_LIGHT: f64 = 299_792_458.0;

pub fn khz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// χ_c(ω) = 1/(κ/2 − i(ω + Δ)).
pub fn chi_c(omega: f64, kappa: f64, delta: f64) -> Complex64 {
    1.0 / Complex64::new(kappa / 2.0, -(omega + delta))
}

pub fn theta(kappa: f64, delta: f64, omega_m: f64) -> f64 {
    (chi_c(omega_m, kappa, delta) - chi_c(-omega_m, kappa, delta).conj()).arg()
}

pub fn amplitude_factor(kappa: f64, delta: f64, omega_m: f64) -> f64 {
    let c0 = chi_c(0.0, kappa, delta);
    let cp = chi_c(omega_m, kappa, delta);
    let cm = chi_c(-omega_m, kappa, delta).conj();
    (c0.conj() * cp + c0 * cm).norm() / (omega_m * c0.norm_sqr() * (cp - cm).re)
}

pub fn n_thermal(omega_m: f64, temperature: f64) -> f64 {
    K_B * temperature / (HBAR * omega_m)
}

pub fn n_backaction(kappa: f64, delta: f64, omega_m: f64) -> f64 {
    let h = (kappa / 2.0).powi(2);
    1.0 / ((h + (delta - omega_m).powi(2)) / (h + (delta + omega_m).powi(2)) - 1.0)
}

/// Optical damping and excess occupancy from the input flux |α₀|², in the
/// form before α₀ is eliminated:
/// Γ_opt = 2g₀²|α|² Re[χ_c(Ω_m) − χ_c*(−Ω_m)] with |α|² = κ|χ_c(0)|²|α₀|²,
/// n_exc = κ²g₀²|α₀|⁴/Γ_opt (|χ_c*(0)χ_c(Ω_m) − χ_c(0)χ_c*(−Ω_m)|² S_φφ
///        + |χ_c*(0)χ_c(Ω_m) + χ_c(0)χ_c*(−Ω_m)|² S_εε).
pub struct Unsimplified {
    pub gamma_opt: f64,
    pub n_exc: f64,
}

pub fn unsimplified(
    kappa: f64,
    delta: f64,
    omega_m: f64,
    g0: f64,
    flux: f64,
    s_phi: f64,
    s_eps: f64,
) -> Unsimplified {
    let c0 = chi_c(0.0, kappa, delta);
    let cp = chi_c(omega_m, kappa, delta);
    let cm = chi_c(-omega_m, kappa, delta).conj();
    let photons = kappa * c0.norm_sqr() * flux;
    let gamma_opt = 2.0 * g0 * g0 * photons * (cp - cm).re;
    let minus = (c0.conj() * cp - c0 * cm).norm_sqr();
    let plus = (c0.conj() * cp + c0 * cm).norm_sqr();
    let n_exc = kappa * kappa * g0 * g0 * flux * flux / gamma_opt * (minus * s_phi + plus * s_eps);
    Unsimplified { gamma_opt, n_exc }
}

/// Optimum of the cooling curve, n_min and Γ_min, with
/// S = S_φφ/cos²θ + A²S_εε.
#[allow(clippy::too_many_arguments)]
pub fn optimum(
    kappa: f64,
    delta: f64,
    omega_m: f64,
    gamma_m: f64,
    temperature: f64,
    g0: f64,
    s_phi: f64,
    s_eps: f64,
) -> (f64, f64) {
    let th = theta(kappa, delta, omega_m);
    let a = amplitude_factor(kappa, delta, omega_m);
    let s = s_phi / th.cos().powi(2) + a * a * s_eps;
    let root = (gamma_m * n_thermal(omega_m, temperature)).sqrt();
    (
        omega_m * root / g0 * s.sqrt(),
        2.0 * g0 * root / omega_m / s.sqrt(),
    )
}

/// P(X ≤ x) for X ~ χ² with 2m degrees of freedom,
/// 1 − e^{−x/2} Σ_{k<m} (x/2)^k / k!.
pub fn chi2_even_cdf(x: f64, m: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let h = x / 2.0;
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..m {
        term *= h / k as f64;
        sum += term;
    }
    // log-space for large h keeps e^{−h}·sum finite
    1.0 - (sum.ln() - h).exp()
}

/// One-sample Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha`,
/// √(−ln(α/2)/2)/√n.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
