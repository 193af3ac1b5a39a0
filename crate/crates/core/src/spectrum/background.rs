use serde::{Deserialize, Serialize};

use super::{FrequencyGrid, Result, Spectrum, SpectrumError, Units};

/// Lorentzian beat note between the probe and leaked cooling light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatNote {
    pub center_hz: f64,
    /// Full width at half maximum, Hz.
    pub width_hz: f64,
    /// Peak height above the tail.
    pub amplitude: f64,
}

impl BeatNote {
    #[inline]
    pub fn value(&self, f: f64) -> f64 {
        let x = 2.0 * (f - self.center_hz) / self.width_hz;
        self.amplitude / (1.0 + x * x)
    }
}

/// Phenomenological background c₀ + c_t·f^(−p) plus an optional beat note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub tail_offset: f64,
    pub tail_amplitude: f64,
    pub tail_exponent: f64,
    pub beat: Option<BeatNote>,
}

impl BackgroundModel {
    pub const DEFAULT_TAIL_EXPONENT: f64 = 2.0;

    pub fn flat(level: f64) -> Self {
        Self {
            tail_offset: level,
            tail_amplitude: 0.0,
            tail_exponent: Self::DEFAULT_TAIL_EXPONENT,
            beat: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.tail_offset, self.tail_amplitude, self.tail_exponent]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.tail_exponent <= 0.0 {
            return Err(SpectrumError::Invalid(format!(
                "bad background tail {self:?}"
            )));
        }
        if let Some(b) = self.beat {
            if !(b.center_hz.is_finite()
                && b.amplitude.is_finite()
                && b.width_hz.is_finite()
                && b.width_hz > 0.0)
            {
                return Err(SpectrumError::Invalid(format!("bad beat note {b:?}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, f: f64) -> f64 {
        let tail = self.tail_offset + self.tail_amplitude * f.powf(-self.tail_exponent);
        tail + self.beat.map(|b| b.value(f)).unwrap_or(0.0)
    }
}

/// Evaluates the background on every bin of `grid`, tagged with `units`.
pub fn evaluate_background(
    model: &BackgroundModel,
    grid: &FrequencyGrid,
    units: Units,
) -> Result<Spectrum> {
    model.validate()?;
    if grid.f_start <= 0.0 {
        return Err(SpectrumError::Invalid(
            "background needs strictly positive frequencies".into(),
        ));
    }
    let values = (0..grid.len)
        .map(|i| model.value(grid.frequency(i)))
        .collect();
    Spectrum::new(*grid, values, units, 1)
}
