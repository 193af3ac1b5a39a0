use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Quadrature detection of the probe beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Local-oscillator phase θ_LO, rad.
    pub theta_lo: f64,
    /// Probe detuning Δ_p, rad/s.
    pub probe_detuning: f64,
    /// Probe-mode linewidth, rad/s.
    pub probe_kappa: f64,
}

impl DetectionConfig {
    /// Phase-quadrature detection of a resonant probe, as in a
    /// Pound–Drever–Hall signal.
    pub fn pdh(probe_kappa: f64) -> Self {
        Self {
            theta_lo: std::f64::consts::FRAC_PI_2,
            probe_detuning: 0.0,
            probe_kappa,
        }
    }

    fn chi(&self, omega: f64) -> Complex64 {
        Complex64::new(self.probe_kappa / 2.0, -(omega + self.probe_detuning)).inv()
    }
}

/// Filter applied to the mechanical signal,
/// C(ω) = i(κ²/8)(χ_p(ω)χ_p(0)e^{−iθ_LO} − χ_p*(−ω)χ_p*(0)e^{iθ_LO}).
pub fn detection_filter_c(omega: f64, detection: &DetectionConfig) -> Complex64 {
    let k = detection.probe_kappa;
    let lo = Complex64::from_polar(1.0, -detection.theta_lo);
    let chi0 = detection.chi(0.0);
    let term =
        detection.chi(omega) * chi0 * lo - detection.chi(-omega).conj() * chi0.conj() * lo.conj();
    Complex64::new(0.0, k * k / 8.0) * term
}

/// Amplitude-noise leakage into the detected quadrature,
/// D(ω) = (1 − κ/2 χ_p(ω) − κ/2 χ_p(0))e^{−iθ_LO} + (1 − κ/2 χ_p*(−ω) − κ/2 χ_p*(0))e^{iθ_LO}.
pub fn amplitude_leak_d(omega: f64, detection: &DetectionConfig) -> Complex64 {
    let half = detection.probe_kappa / 2.0;
    let lo = Complex64::from_polar(1.0, -detection.theta_lo);
    let chi0 = detection.chi(0.0);
    let one = Complex64::new(1.0, 0.0);
    (one - detection.chi(omega) * half - chi0 * half) * lo
        + (one - detection.chi(-omega).conj() * half - chi0.conj() * half) * lo.conj()
}
