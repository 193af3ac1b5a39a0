//! Detected output spectrum of the probe field: transfer functions, peak
//! lineshapes, background structures and synthetic periodograms.
//!
//! Spectra are one-sided PSDs on a uniform grid of ordinary frequency (Hz).
//! Model spectra carry the same numerical scale as a spectrum calibrated in
//! frequency-noise units (Hz²/Hz), so that the area of a mechanical peak is
//! (g₀/2π)²(2n_eff + 1).

mod background;
mod detection;
mod lineshape;
mod model;
mod synth;

pub use background::{evaluate_background, BackgroundModel, BeatNote};
pub use detection::{amplitude_leak_d, detection_filter_c, DetectionConfig};
pub use lineshape::{
    dispersive_shape, lorentzian_shape, peak_model, LineshapeCoeffs, ONE_SIDED_FOLD,
};
pub use model::{output_psd, ModelInputs, ModelTruth};
pub use synth::{
    add_calibration_tone, synthesize_measured_spectrum, synthesize_with_rng, CalibrationTone,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::PhysicsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("invalid spectrum: {0}")]
    Invalid(String),
    #[error("non-finite value at bin {0}")]
    NonFinite(usize),
    #[error("negative value at bin {0}")]
    Negative(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("unit mismatch: {left} vs {right}")]
    UnitMismatch { left: Units, right: Units },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

pub type Result<T> = std::result::Result<T, SpectrumError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Uncalibrated detector PSD, V²/Hz.
    RawVolts2,
    /// Calibrated frequency-noise PSD.
    Hz2PerHz,
    /// Forward-model output with unit scale constant.
    NormalizedModel,
}

impl Units {
    pub fn tag(self) -> &'static str {
        match self {
            Units::RawVolts2 => "raw_volts2",
            Units::Hz2PerHz => "hz2_per_hz",
            Units::NormalizedModel => "normalized_model",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "raw_volts2" | "raw" => Some(Units::RawVolts2),
            "hz2_per_hz" => Some(Units::Hz2PerHz),
            "normalized_model" => Some(Units::NormalizedModel),
            _ => None,
        }
    }
}

impl std::fmt::Display for Units {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Uniform frequency grid f_i = f_start + i·f_step, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_start: f64,
    pub f_step: f64,
    pub len: usize,
}

impl FrequencyGrid {
    pub fn new(f_start: f64, f_step: f64, len: usize) -> Result<Self> {
        if !(f_start.is_finite() && f_step.is_finite() && f_step > 0.0) {
            return Err(SpectrumError::Invalid(format!(
                "bad grid start {f_start} / step {f_step}"
            )));
        }
        if len == 0 {
            return Err(SpectrumError::Invalid("empty grid".into()));
        }
        Ok(Self {
            f_start,
            f_step,
            len,
        })
    }

    /// Grid covering [f_lo, f_hi] inclusive of both ends (to within a step).
    pub fn spanning(f_lo: f64, f_hi: f64, f_step: f64) -> Result<Self> {
        if !(f_hi > f_lo) {
            return Err(SpectrumError::Invalid(format!(
                "empty range [{f_lo}, {f_hi}]"
            )));
        }
        let len = ((f_hi - f_lo) / f_step).round() as usize + 1;
        Self::new(f_lo, f_step, len)
    }

    #[inline]
    pub fn frequency(&self, i: usize) -> f64 {
        self.f_start + i as f64 * self.f_step
    }

    #[inline]
    pub fn angular(&self, i: usize) -> f64 {
        std::f64::consts::TAU * self.frequency(i)
    }

    pub fn f_stop(&self) -> f64 {
        self.frequency(self.len - 1)
    }

    /// Index of the bin nearest to `f`, clamped to the grid.
    pub fn nearest(&self, f: f64) -> usize {
        let i = ((f - self.f_start) / self.f_step).round();
        i.clamp(0.0, (self.len - 1) as f64) as usize
    }

    /// Index range of bins with frequency in [f_lo, f_hi].
    pub fn index_range(&self, f_lo: f64, f_hi: f64) -> std::ops::Range<usize> {
        let lo = ((f_lo - self.f_start) / self.f_step).ceil().max(0.0) as usize;
        let hi = (((f_hi - self.f_start) / self.f_step).floor() + 1.0).clamp(0.0, self.len as f64)
            as usize;
        lo.min(hi)..hi
    }

    pub fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.len == other.len
            && (self.f_start - other.f_start).abs() <= 1e-9 * self.f_step
            && (self.f_step - other.f_step).abs() <= 1e-12 * self.f_step
    }
}

pub const META_BACKGROUND_SUBTRACTED: &str = "background_subtracted";
pub const META_NEGATIVE_BINS: &str = "negative_bins";

/// One-sided PSD on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: FrequencyGrid,
    values: Vec<f64>,
    units: Units,
    n_averages: u32,
    pub metadata: BTreeMap<String, String>,
}

impl Spectrum {
    /// Validated constructor: values finite and non-negative, n_averages ≥ 1.
    pub fn new(
        grid: FrequencyGrid,
        values: Vec<f64>,
        units: Units,
        n_averages: u32,
    ) -> Result<Self> {
        let s = Self {
            grid,
            values,
            units,
            n_averages,
            metadata: BTreeMap::new(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Constructor with metadata attached before validation, so a
    /// background-subtracted tag admits negative bins.
    pub fn from_parts(
        grid: FrequencyGrid,
        values: Vec<f64>,
        units: Units,
        n_averages: u32,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let s = Self {
            grid,
            values,
            units,
            n_averages,
            metadata,
        };
        s.validate()?;
        Ok(s)
    }

    /// Background-subtracted spectra may hold negative bins.
    pub(crate) fn new_signed(
        grid: FrequencyGrid,
        values: Vec<f64>,
        units: Units,
        n_averages: u32,
    ) -> Result<Self> {
        let mut s = Self {
            grid,
            values,
            units,
            n_averages,
            metadata: BTreeMap::new(),
        };
        s.metadata
            .insert(META_BACKGROUND_SUBTRACTED.into(), "true".into());
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.len {
            return Err(SpectrumError::Invalid(format!(
                "{} values for a grid of {} bins",
                self.values.len(),
                self.grid.len
            )));
        }
        if self.n_averages == 0 {
            return Err(SpectrumError::Invalid(
                "n_averages must be at least 1".into(),
            ));
        }
        let signed = self.allows_negative();
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(SpectrumError::NonFinite(i));
            }
            if v < 0.0 && !signed {
                return Err(SpectrumError::Negative(i));
            }
        }
        Ok(())
    }

    pub fn allows_negative(&self) -> bool {
        self.metadata
            .get(META_BACKGROUND_SUBTRACTED)
            .map(|v| v == "true")
            .unwrap_or(false)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn n_averages(&self) -> u32 {
        self.n_averages
    }

    pub fn f_start(&self) -> f64 {
        self.grid.f_start
    }

    pub fn f_step(&self) -> f64 {
        self.grid.f_step
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.grid.frequency(i)
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.grid.frequency(i))
    }

    /// Explicit relabelling of the unit tag. Values are untouched; the
    /// caller asserts the scale is already right.
    pub fn assume_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn with_n_averages(mut self, n_averages: u32) -> Result<Self> {
        self.n_averages = n_averages;
        self.validate()?;
        Ok(self)
    }

    /// Bin-wise sum of two spectra on the same grid and in the same units.
    pub fn add(&self, other: &Spectrum) -> Result<Spectrum> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        let mut out = Spectrum::new(self.grid, values, self.units, self.n_averages)?;
        out.metadata = self.metadata.clone();
        Ok(out)
    }

    /// Multiplies every bin by `factor` and relabels units.
    pub fn scaled(&self, factor: f64, units: Units) -> Result<Spectrum> {
        let values = self.values.iter().map(|v| v * factor).collect();
        let out = Self {
            grid: self.grid,
            values,
            units,
            n_averages: self.n_averages,
            metadata: self.metadata.clone(),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn check_compatible(&self, other: &Spectrum) -> Result<()> {
        if self.units != other.units {
            return Err(SpectrumError::UnitMismatch {
                left: self.units,
                right: other.units,
            });
        }
        if !self.grid.same_as(&other.grid) {
            return Err(SpectrumError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
