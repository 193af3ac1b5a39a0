//! Inverse analysis: weighted nonlinear least squares, background removal,
//! peak lineshape fits, cooling-curve fits and laser-noise extraction.

mod background;
mod cooling;
mod nlls;
mod noise;
mod peak;

pub use background::{fit_background, subtract_background, BackgroundFit, BackgroundFitOptions};
pub use cooling::{fit_cooling_curve, CoolingCurveResult, CoolingPoint};
pub use nlls::{nlls_fit, FitProblem, NllsFit, CONVERGENCE_TOLERANCE, MAX_ITERATIONS};
pub use noise::{
    discriminate_noise, dispersive_slope, extract_noise_psd, DispersivePoint, NoiseDiscrimination,
    NoiseDominance, NoiseExtraction, PsdEstimate,
};
pub use peak::{
    effective_area, fit_peak, peak_initial_guess, LineshapeFit, ModelChoice, PeakFitOptions,
    PeakFitResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::PhysicsError;
use crate::spectrum::SpectrumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {points} points for {params} parameters")]
    InsufficientData { points: usize, params: usize },
    #[error("degenerate parameterization")]
    Degenerate,
    #[error("no convergence after {iterations} iterations (best reduced chi2 {:.6e})", best.reduced_chi2)]
    NotConverged {
        iterations: usize,
        best: Box<NllsFit>,
    },
    #[error("no peak in window [{f_lo:.1}, {f_hi:.1}] Hz")]
    NoPeak { f_lo: f64, f_hi: f64 },
    #[error("a_eff undefined: tan(theta) = 0 with nonzero dispersive weight")]
    EffectiveAreaUndefined,
    #[error("dataset inconsistent with model: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

pub type Result<T> = std::result::Result<T, FitError>;

/// A value with its one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }

    /// Distance from `truth` in units of sigma.
    pub fn pull(&self, truth: f64) -> f64 {
        (self.value - truth) / self.sigma
    }

    pub fn relative(&self) -> f64 {
        self.sigma / self.value.abs()
    }
}

impl std::fmt::Display for Measured {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.6e} ± {:.2e}", self.value, self.sigma)
    }
}

/// Neighbours averaged on each side when estimating a bin's expected level.
pub const SMOOTHING_HALF_WIDTH: usize = 5;

/// Inverse variances M/S̄² of periodogram bins, where S̄ averages the
/// 2·[`SMOOTHING_HALF_WIDTH`] nearest neighbours of each bin, the bin itself
/// excluded so that a high draw does not lower its own weight.
pub fn periodogram_weights(level: &[f64], n_averages: u32) -> Result<Vec<f64>> {
    let n = level.len();
    let want = 2 * SMOOTHING_HALF_WIDTH;
    if n < want + 1 {
        return Err(FitError::InsufficientData {
            points: n,
            params: want + 1,
        });
    }
    let m = n_averages as f64;
    (0..n)
        .map(|i| {
            let mut lo = i.saturating_sub(SMOOTHING_HALF_WIDTH);
            let mut hi = (i + SMOOTHING_HALF_WIDTH).min(n - 1);
            // keep the count at the edges by borrowing from the other side
            while hi - lo < want {
                if lo > 0 {
                    lo -= 1;
                } else {
                    hi += 1;
                }
            }
            let sum: f64 = level[lo..=hi].iter().sum::<f64>() - level[i];
            let mean = sum / want as f64;
            if mean > 0.0 && mean.is_finite() {
                Ok(m / (mean * mean))
            } else {
                Err(FitError::InvalidInput(format!(
                    "non-positive smoothed level at bin {i}"
                )))
            }
        })
        .collect()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Upper z-sigma-equivalent quantile of χ²_{2M}/(2M) (Wilson–Hilferty).
pub(crate) fn periodogram_outlier_ratio(n_averages: u32, z: f64) -> f64 {
    let k = 2.0 * n_averages as f64;
    let c = 2.0 / (9.0 * k);
    (1.0 - c + z * c.sqrt()).powi(3)
}
