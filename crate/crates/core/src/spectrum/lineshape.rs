use serde::{Deserialize, Serialize};

/// Factor folding the symmetrised two-sided spectrum onto positive
/// frequencies.
pub const ONE_SIDED_FOLD: f64 = 2.0;

/// Peak lineshape coefficients of a0 + a1·ω + 2|C(ω)|²(a2·L + a3·D).
///
/// `a1` multiplies the angular frequency ω = 2πf. `omega_eff` and
/// `gamma_eff` are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeCoeffs {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub omega_eff: f64,
    pub gamma_eff: f64,
}

impl LineshapeCoeffs {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.a0,
            self.a1,
            self.a2,
            self.a3,
            self.omega_eff,
            self.gamma_eff,
        ]
    }

    pub fn from_array(p: &[f64]) -> Self {
        Self {
            a0: p[0],
            a1: p[1],
            a2: p[2],
            a3: p[3],
            omega_eff: p[4],
            gamma_eff: p[5],
        }
    }
}

#[inline]
fn response_sqr(omega: f64, omega_eff: f64, gamma_eff: f64) -> f64 {
    let d = omega - omega_eff;
    1.0 / (d * d + 0.25 * gamma_eff * gamma_eff)
}

/// L = (Γ_eff/2)(|χ_eff(ω)|² + |χ_eff(−ω)|²).
#[inline]
pub fn lorentzian_shape(omega: f64, omega_eff: f64, gamma_eff: f64) -> f64 {
    0.5 * gamma_eff
        * (response_sqr(omega, omega_eff, gamma_eff) + response_sqr(-omega, omega_eff, gamma_eff))
}

/// D = (ω − Ω_eff)|χ_eff(ω)|² + (−ω − Ω_eff)|χ_eff(−ω)|².
#[inline]
pub fn dispersive_shape(omega: f64, omega_eff: f64, gamma_eff: f64) -> f64 {
    (omega - omega_eff) * response_sqr(omega, omega_eff, gamma_eff)
        + (-omega - omega_eff) * response_sqr(-omega, omega_eff, gamma_eff)
}

/// Evaluates the peak fit function at angular frequency `omega`, given the
/// detection filter power |C(ω)|².
#[inline]
pub fn peak_model(omega: f64, filter_sqr: f64, c: &LineshapeCoeffs) -> f64 {
    let l = lorentzian_shape(omega, c.omega_eff, c.gamma_eff);
    let d = dispersive_shape(omega, c.omega_eff, c.gamma_eff);
    c.a0 + c.a1 * omega + ONE_SIDED_FOLD * filter_sqr * (c.a2 * l + c.a3 * d)
}
