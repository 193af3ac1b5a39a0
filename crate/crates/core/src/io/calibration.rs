use super::{IoError, Result};
use crate::fit::median;
use crate::spectrum::{CalibrationTone, Spectrum, Units};

/// Tone bin height over the local background required for calibration.
pub const TONE_MIN_CONTRAST: f64 = 10.0;
/// Bins either side of the nominal tone frequency searched for its maximum.
const SEARCH_BINS: usize = 2;
/// Bins either side of the tone used for the local background.
const BACKGROUND_BINS: usize = 20;

/// Ratio of the integrated tone in `spectrum` to its nominal power, i.e. the
/// detector scale in spectrum units per Hz²/Hz.
pub fn tone_scale(spectrum: &Spectrum, tone: &CalibrationTone) -> Result<f64> {
    let not_found = |contrast: f64| IoError::ToneNotFound {
        frequency_hz: tone.frequency_hz,
        contrast,
        required: TONE_MIN_CONTRAST,
    };
    if !(tone.power_hz2 > 0.0 && tone.power_hz2.is_finite()) {
        return Err(IoError::Config(
            "calibration tone power must be positive".into(),
        ));
    }
    let grid = spectrum.grid();
    let half = 0.5 * grid.f_step;
    if tone.frequency_hz < grid.f_start - half || tone.frequency_hz > grid.f_stop() + half {
        return Err(not_found(0.0));
    }
    let values = spectrum.values();
    let n = values.len();
    let nominal = grid.nearest(tone.frequency_hz);
    let lo = nominal.saturating_sub(SEARCH_BINS);
    let hi = (nominal + SEARCH_BINS).min(n - 1);
    let peak = (lo..=hi)
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(nominal);

    let near: Vec<f64> = (peak.saturating_sub(BACKGROUND_BINS)
        ..=(peak + BACKGROUND_BINS).min(n - 1))
        .filter(|&j| j.abs_diff(peak) > SEARCH_BINS)
        .map(|j| values[j])
        .collect();
    if near.is_empty() {
        return Err(not_found(0.0));
    }
    let background = median(&near);
    let contrast = if background > 0.0 {
        values[peak] / background
    } else {
        f64::INFINITY
    };
    if !(contrast >= TONE_MIN_CONTRAST) || values[peak] <= 0.0 {
        return Err(not_found(if contrast.is_finite() { contrast } else { 0.0 }));
    }
    let integrated: f64 = (peak.saturating_sub(1)..=(peak + 1).min(n - 1))
        .map(|j| values[j] - background)
        .sum::<f64>()
        * grid.f_step;
    Ok(integrated / tone.power_hz2)
}

/// Rescales `spectrum` so the integrated tone equals its nominal power,
/// giving a PSD in Hz²/Hz. The applied scale is kept in the metadata.
pub fn calibrate_with_tone(spectrum: &Spectrum, tone: &CalibrationTone) -> Result<Spectrum> {
    let scale = tone_scale(spectrum, tone)?;
    let mut out = spectrum.scaled(1.0 / scale, Units::Hz2PerHz)?;
    out.metadata
        .insert("calibration_scale".into(), format!("{scale:.16e}"));
    out.metadata.insert(
        "calibration_tone_hz".into(),
        format!("{}", tone.frequency_hz),
    );
    Ok(out)
}
