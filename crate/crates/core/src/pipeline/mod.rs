//! End-to-end workflows built from the lower layers: synthetic campaigns,
//! single-spectrum analysis, cooling-curve analysis and parameter sweeps.

mod analysis;
mod predict;
mod synth;

pub use analysis::{
    analyze_cooling, analyze_spectrum, occupancy_from_area, AnalysisOptions, SpectrumAnalysis,
};
pub use predict::{predict, PredictDrive, PredictRow, PredictTable, Sweep};
pub use synth::{
    gamma_opt_grid, input_power_grid, synthesize_campaign, Campaign, CampaignManifest,
    ManifestPoint,
};

use thiserror::Error;

use crate::fit::FitError;
use crate::io::IoError;
use crate::physics::PhysicsError;
use crate::spectrum::SpectrumError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("drive point {index} ({drive}): {source}")]
    Point {
        index: usize,
        drive: String,
        source: SpectrumError,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
