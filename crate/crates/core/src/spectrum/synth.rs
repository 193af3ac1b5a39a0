use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use super::{Result, Spectrum, SpectrumError};

/// Coherent modulation of known strength, expressed as an equivalent
/// frequency-noise power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTone {
    pub frequency_hz: f64,
    /// Integrated tone power, Hz².
    pub power_hz2: f64,
}

/// Adds the tone as a single-bin line of height power/f_step.
pub fn add_calibration_tone(
    spectrum: &Spectrum,
    tone: &CalibrationTone,
    scale: f64,
) -> Result<Spectrum> {
    let grid = spectrum.grid();
    let half = 0.5 * grid.f_step;
    if tone.frequency_hz < grid.f_start - half || tone.frequency_hz > grid.f_stop() + half {
        return Err(SpectrumError::Invalid(format!(
            "tone at {} Hz lies outside the grid",
            tone.frequency_hz
        )));
    }
    if !(tone.power_hz2.is_finite() && tone.power_hz2 > 0.0) {
        return Err(SpectrumError::Invalid("tone power must be positive".into()));
    }
    let mut out = spectrum.clone();
    let i = grid.nearest(tone.frequency_hz);
    out.values_mut()[i] += scale * tone.power_hz2 / grid.f_step;
    Ok(out)
}

/// Simulates an M-average periodogram of `model`: every bin is an
/// independent S·χ²_{2M}/(2M) draw.
pub fn synthesize_measured_spectrum(
    model: &Spectrum,
    n_averages: u32,
    seed: u64,
) -> Result<Spectrum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = synthesize_with_rng(model, n_averages, &mut rng)?;
    out.metadata.insert("seed".into(), seed.to_string());
    Ok(out)
}

pub fn synthesize_with_rng<R: Rng + ?Sized>(
    model: &Spectrum,
    n_averages: u32,
    rng: &mut R,
) -> Result<Spectrum> {
    if n_averages == 0 {
        return Err(SpectrumError::Invalid(
            "n_averages must be at least 1".into(),
        ));
    }
    let dof = 2.0 * n_averages as f64;
    let chi2 = ChiSquared::new(dof).map_err(|e| SpectrumError::Invalid(e.to_string()))?;
    let values = model
        .values()
        .iter()
        .map(|&s| s * chi2.sample(rng) / dof)
        .collect();
    let mut out = Spectrum::new(*model.grid(), values, model.units(), n_averages)?;
    out.metadata = model.metadata.clone();
    Ok(out)
}
