//! Persistence and unit handling at the edges of the analysis: spectrum
//! files, tone calibration, JSON configuration and reports, noise unit
//! conversions.

mod calibration;
mod config;
mod convert;
mod report;
mod spectrum_file;

pub use calibration::{calibrate_with_tone, tone_scale, TONE_MIN_CONTRAST};
pub use config::{
    BackgroundConfig, CampaignConfig, CavityConfig, DetectionSettings, ExperimentConfig,
    ModeConfig, NoiseConfig,
};
pub use convert::{
    frequency_noise_from_length, frequency_noise_from_phase, length_noise_from_frequency,
    phase_noise_from_frequency,
};
pub use report::{CoolingReport, FitReport, PeakRecord, Provenance};
pub use spectrum_file::{format_spectrum, parse_spectrum, read_spectrum, write_spectrum};

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fit::FitError;
use crate::physics::PhysicsError;
use crate::spectrum::SpectrumError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
    #[error("bad header line {line}: {reason}")]
    BadHeader { line: usize, reason: String },
    #[error("line {line}: frequency {found} Hz breaks the uniform grid (expected {expected} Hz)")]
    NonUniformGrid {
        line: usize,
        expected: f64,
        found: f64,
    },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("no calibration tone near {frequency_hz} Hz: contrast {contrast:.2} below {required}")]
    ToneNotFound {
        frequency_hz: f64,
        contrast: f64,
        required: f64,
    },
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| IoError::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(file_error(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        IoError::File {
            path: path.to_path_buf(),
            source: e,
        }
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(file_error(path))
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}
