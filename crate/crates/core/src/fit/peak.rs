use serde::{Deserialize, Serialize};

use super::nlls::{nlls_fit, FitProblem, NllsFit};
use super::{median, periodogram_outlier_ratio, periodogram_weights, FitError, Measured, Result};
use crate::spectrum::{
    detection_filter_c, dispersive_shape, lorentzian_shape, DetectionConfig, LineshapeCoeffs,
    Spectrum, ONE_SIDED_FOLD,
};

const MIN_WINDOW_BINS: usize = 12;
/// Outlier bins beyond this fraction of the window mean the model, not the
/// data, is wrong; no bins are dropped then.
const MAX_OUTLIER_FRACTION: f64 = 0.05;
/// A peak must rise this many per-bin noise levels above the lower decile
/// of the window, after median filtering.
const NO_PEAK_SIGNIFICANCE: f64 = 8.0;
const NO_PEAK_QUANTILE: f64 = 0.1;
const GUESS_MEDIAN_HALF_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFitOptions<'a> {
    pub init: Option<LineshapeCoeffs>,
    /// Sideband angle used for a_eff = a₂ + a₃/tanθ.
    pub theta: Option<f64>,
    /// Spectrum before background subtraction. Sets bin variances and the
    /// no-peak test; defaults to the fitted spectrum itself.
    pub reference: Option<&'a Spectrum>,
    /// One-sided outlier threshold in equivalent Gaussian sigmas; `None`
    /// keeps every bin.
    pub outlier_z: Option<f64>,
}

impl Default for PeakFitOptions<'_> {
    fn default() -> Self {
        Self {
            init: None,
            theta: None,
            reference: None,
            outlier_z: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// Lorentzian plus dispersive shape.
    Joint,
    /// Dispersive weight held at zero.
    LorentzianOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineshapeFit {
    pub coeffs: LineshapeCoeffs,
    /// Covariance over (a₀, a₁, a₂, a₃, Ω_eff, Γ_eff); the a₃ row and column
    /// vanish for a Lorentzian-only fit.
    pub covariance: [[f64; 6]; 6],
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub a_eff: Option<Measured>,
}

impl LineshapeFit {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    pub fn omega_eff(&self) -> Measured {
        Measured::new(self.coeffs.omega_eff, self.sigma(4))
    }

    pub fn gamma_eff(&self) -> Measured {
        Measured::new(self.coeffs.gamma_eff, self.sigma(5))
    }

    pub fn a3(&self) -> Measured {
        Measured::new(self.coeffs.a3, self.sigma(3))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFitResult {
    pub joint: LineshapeFit,
    /// Absent when the restricted model is degenerate on this window, which
    /// happens when a strong dispersive part drives its width to the bound.
    pub lorentzian: Option<LineshapeFit>,
    pub selected: ModelChoice,
    /// χ²(Lorentzian-only) − χ²(joint).
    pub delta_chi2: Option<f64>,
    pub window_hz: (f64, f64),
    pub n_bins: usize,
    /// Frequencies of bins dropped as spurious.
    pub excluded_hz: Vec<f64>,
}

impl PeakFitResult {
    pub fn best(&self) -> &LineshapeFit {
        match (&self.selected, &self.lorentzian) {
            (ModelChoice::LorentzianOnly, Some(l)) => l,
            _ => &self.joint,
        }
    }
}

/// a_eff = a₂ + a₃/tanθ with linear error propagation over the (a₂, a₃)
/// covariance block.
pub fn effective_area(a2: f64, a3: f64, theta: f64, covariance: [[f64; 2]; 2]) -> Result<Measured> {
    if a3 == 0.0 {
        return Ok(Measured::new(a2, covariance[0][0].max(0.0).sqrt()));
    }
    let tan = theta.tan();
    if tan == 0.0 || !tan.is_finite() {
        return Err(FitError::EffectiveAreaUndefined);
    }
    let var = covariance[0][0] + covariance[1][1] / (tan * tan) + 2.0 * covariance[0][1] / tan;
    Ok(Measured::new(a2 + a3 / tan, var.max(0.0).sqrt()))
}

struct Window {
    omega: Vec<f64>,
    filter: Vec<f64>,
    data: Vec<f64>,
    /// Expected-level spectrum in the window (reference or data).
    level: Vec<f64>,
    freqs: Vec<f64>,
    center: f64,
    n_averages: u32,
}

fn window(
    spectrum: &Spectrum,
    range: (f64, f64),
    detection: &DetectionConfig,
    reference: Option<&Spectrum>,
) -> Result<Window> {
    if let Some(r) = reference {
        if !r.grid().same_as(spectrum.grid()) {
            return Err(FitError::InvalidInput(
                "reference spectrum is on a different grid".into(),
            ));
        }
    }
    let idx = spectrum.grid().index_range(range.0, range.1);
    if idx.len() < MIN_WINDOW_BINS {
        return Err(FitError::InsufficientData {
            points: idx.len(),
            params: MIN_WINDOW_BINS,
        });
    }
    let grid = spectrum.grid();
    let omega: Vec<f64> = idx.clone().map(|i| grid.angular(i)).collect();
    let filter = omega
        .iter()
        .map(|&w| detection_filter_c(w, detection).norm_sqr())
        .collect();
    let data = spectrum.values()[idx.clone()].to_vec();
    let level = reference
        .map(|r| r.values()[idx.clone()].to_vec())
        .unwrap_or_else(|| data.clone());
    let freqs = idx.map(|i| grid.frequency(i)).collect();
    let center = 0.5 * (omega[0] + omega[omega.len() - 1]);
    Ok(Window {
        omega,
        filter,
        data,
        level,
        freqs,
        center,
        n_averages: spectrum.n_averages(),
    })
}

fn running_median(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| median(&values[i.saturating_sub(half)..=(i + half).min(n - 1)]))
        .collect()
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)]
}

fn guess_from_window(win: &Window, range: (f64, f64)) -> Result<LineshapeCoeffs> {
    let n = win.data.len();
    let level_median = median(&win.level);
    let level_top = running_median(&win.level, GUESS_MEDIAN_HALF_WIDTH)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = quantile(&win.level, NO_PEAK_QUANTILE);
    let noise = if level_median > 0.0 {
        level_median / (win.n_averages as f64).sqrt()
    } else {
        1.4826
            * median(
                &win.level
                    .iter()
                    .map(|v| (v - level_median).abs())
                    .collect::<Vec<_>>(),
            )
    };
    if !(level_top - floor > NO_PEAK_SIGNIFICANCE * noise) {
        return Err(FitError::NoPeak {
            f_lo: range.0,
            f_hi: range.1,
        });
    }

    // a running median keeps single-bin spikes from posing as the peak
    let filtered = running_median(&win.data, GUESS_MEDIAN_HALF_WIDTH);
    // leftmost maximum
    let mut top = 0;
    for i in 1..n {
        if filtered[i] > filtered[top] {
            top = i;
        }
    }
    let edge = (n / 10).max(3);
    let mut edges: Vec<f64> = win.data[..edge].to_vec();
    edges.extend_from_slice(&win.data[n - edge..]);
    let a0 = median(&edges);
    let height = filtered[top] - a0;
    if height <= 0.0 {
        return Err(FitError::NoPeak {
            f_lo: range.0,
            f_hi: range.1,
        });
    }
    let half = a0 + 0.5 * height;
    let mut left = top;
    while left > 0 && filtered[left - 1] > half {
        left -= 1;
    }
    let mut right = top;
    while right + 1 < n && filtered[right + 1] > half {
        right += 1;
    }
    let step = win.omega[1] - win.omega[0];
    let gamma = ((right - left + 1) as f64 * step).max(step);
    let omega = win.omega[top];
    let a2 = height * gamma / (2.0 * ONE_SIDED_FOLD * win.filter[top]);
    Ok(LineshapeCoeffs {
        a0,
        a1: 0.0,
        a2,
        a3: 0.0,
        omega_eff: omega,
        gamma_eff: gamma,
    })
}

/// Starting lineshape for a peak fit: Ω_eff at the tallest bin of the
/// 5-bin running median (leftmost on ties), Γ_eff from the half-maximum
/// span, a₂ from the peak height.
pub fn peak_initial_guess(
    spectrum: &Spectrum,
    range: (f64, f64),
    detection: &DetectionConfig,
) -> Result<LineshapeCoeffs> {
    let win = window(spectrum, range, detection, None)?;
    guess_from_window(&win, range)
}

/// Fit parameters are (b₀, a₁, a₂, [a₃,] Ω_eff, Γ_eff) with the background
/// line written about the window centre, b₀ = a₀ + a₁·ω_c.
struct LineshapeProblem<'w> {
    win: &'w Window,
    keep: Vec<usize>,
    joint: bool,
}

impl LineshapeProblem<'_> {
    fn eval(&self, p: &[f64], out: &mut [f64]) {
        let (b0, a1, a2) = (p[0], p[1], p[2]);
        let (a3, om, ga) = if self.joint {
            (p[3], p[4], p[5])
        } else {
            (0.0, p[3], p[4])
        };
        for (o, &i) in out.iter_mut().zip(&self.keep) {
            let w = self.win.omega[i];
            let l = lorentzian_shape(w, om, ga);
            let d = if self.joint {
                dispersive_shape(w, om, ga)
            } else {
                0.0
            };
            *o = b0
                + a1 * (w - self.win.center)
                + ONE_SIDED_FOLD * self.win.filter[i] * (a2 * l + a3 * d);
        }
    }

    fn run(&self, start: &LineshapeCoeffs, weights: &[f64]) -> Result<NllsFit> {
        let b0 = start.a0 + start.a1 * self.win.center;
        let width = self.win.omega[self.win.omega.len() - 1] - self.win.omega[0];
        let step = self.win.omega[1] - self.win.omega[0];
        let data: Vec<f64> = self.keep.iter().map(|&i| self.win.data[i]).collect();
        let w: Vec<f64> = self.keep.iter().map(|&i| weights[i]).collect();
        let peak = (ONE_SIDED_FOLD * start.a2 * 2.0 / start.gamma_eff).abs();
        let amp = start.a2.abs().max(f64::MIN_POSITIVE);
        let mut initial = vec![b0, start.a1, start.a2];
        let mut scales = vec![b0.abs().max(1e-3 * peak), peak / width, amp];
        let unbounded = (f64::NEG_INFINITY, f64::INFINITY);
        let mut bounds = vec![unbounded; 3];
        if self.joint {
            initial.push(start.a3);
            scales.push(amp);
            bounds.push(unbounded);
        }
        initial.extend([start.omega_eff, start.gamma_eff]);
        scales.extend([start.omega_eff.abs(), start.gamma_eff]);
        bounds.extend([
            (self.win.omega[0], self.win.omega[self.win.omega.len() - 1]),
            (1e-3 * step, width),
        ]);
        let model = |p: &[f64], out: &mut [f64]| self.eval(p, out);
        nlls_fit(&FitProblem {
            model: &model,
            data: &data,
            weights: &w,
            initial,
            bounds: Some(bounds),
            scales: Some(scales),
        })
    }

    /// Maps fitted parameters and covariance back to (a₀, a₁, a₂, a₃, Ω, Γ).
    fn unpack(&self, fit: &NllsFit, theta: Option<f64>) -> Result<LineshapeFit> {
        let map: Vec<usize> = if self.joint {
            vec![0, 1, 2, 3, 4, 5]
        } else {
            vec![0, 1, 2, 4, 5]
        };
        let p = &fit.params;
        let mut full = [0.0; 6];
        for (k, &j) in map.iter().enumerate() {
            full[j] = p[k];
        }
        let c = self.win.center;
        full[0] -= full[1] * c;
        // a₀ = b₀ − c·a₁ is the only non-identity row
        let mut t = [[0.0; 6]; 6];
        for (k, &j) in map.iter().enumerate() {
            t[j][k] = 1.0;
        }
        t[0][1] = -c;
        let k = map.len();
        let mut cov = [[0.0; 6]; 6];
        for a in 0..6 {
            for b in 0..6 {
                let mut s = 0.0;
                for i in 0..k {
                    for j in 0..k {
                        s += t[a][i] * fit.covariance[(i, j)] * t[b][j];
                    }
                }
                cov[a][b] = s;
            }
        }
        let coeffs = LineshapeCoeffs::from_array(&full);
        let a_eff = match theta {
            Some(th) => Some(effective_area(
                coeffs.a2,
                coeffs.a3,
                th,
                [[cov[2][2], cov[2][3]], [cov[3][2], cov[3][3]]],
            )?),
            None => None,
        };
        Ok(LineshapeFit {
            coeffs,
            covariance: cov,
            chi2: fit.chi2,
            reduced_chi2: fit.reduced_chi2,
            dof: fit.dof,
            iterations: fit.iterations,
            a_eff,
        })
    }
}

/// Fits a0 + a1·ω + 2|C(ω)|²(a2·L + a3·D) inside `range` (Hz), together
/// with its Lorentzian-only restriction. The filter |C|² comes from the
/// detection configuration and is not fitted. Bins far above the fitted
/// model (periodogram outliers) are dropped once and the fits repeated.
pub fn fit_peak(
    spectrum: &Spectrum,
    range: (f64, f64),
    detection: &DetectionConfig,
    options: &PeakFitOptions<'_>,
) -> Result<PeakFitResult> {
    let win = window(spectrum, range, detection, options.reference)?;
    let n = win.data.len();
    let start = match options.init {
        Some(c) => c,
        None => guess_from_window(&win, range)?,
    };
    let m = spectrum.n_averages();
    let weights = periodogram_weights(&win.level, m)?;
    let all: Vec<usize> = (0..n).collect();
    let joint = LineshapeProblem {
        win: &win,
        keep: all.clone(),
        joint: true,
    };
    let mut joint_fit = joint.run(&start, &weights)?;
    let mut keep = all;

    if let Some(z) = options.outlier_z {
        let ratio = periodogram_outlier_ratio(m, z);
        let mut model = vec![0.0; n];
        joint.eval(&joint_fit.params, &mut model);
        let flagged: Vec<usize> = (0..n)
            .filter(|&i| {
                let total = model[i] + (win.level[i] - win.data[i]);
                win.data[i] - model[i] > (ratio - 1.0) * total
            })
            .collect();
        if !flagged.is_empty() && (flagged.len() as f64) <= MAX_OUTLIER_FRACTION * n as f64 {
            log::info!(
                "dropping {} spurious bin(s) from the peak window",
                flagged.len()
            );
            keep.retain(|i| !flagged.contains(i));
            let refit = LineshapeProblem {
                win: &win,
                keep: keep.clone(),
                joint: true,
            };
            let resumed = refit.unpack(&joint_fit, None)?.coeffs;
            joint_fit = refit.run(&resumed, &weights)?;
        }
    }

    let joint = LineshapeProblem {
        win: &win,
        keep: keep.clone(),
        joint: true,
    };
    let joint_result = joint.unpack(&joint_fit, options.theta)?;
    let lorentz = LineshapeProblem {
        win: &win,
        keep: keep.clone(),
        joint: false,
    };
    let lorentz_start = LineshapeCoeffs {
        a3: 0.0,
        ..joint_result.coeffs
    };
    // the restricted fit only informs model selection; its best iterate will do
    let lorentz_fit = match lorentz.run(&lorentz_start, &weights) {
        Err(FitError::NotConverged { iterations, best }) => {
            log::warn!("Lorentzian-only fit stopped after {iterations} iterations");
            Some(*best)
        }
        Err(FitError::Degenerate) => {
            log::info!("Lorentzian-only model is degenerate on this window; keeping the joint fit");
            None
        }
        other => Some(other?),
    };
    let lorentz_result = lorentz_fit
        .map(|f| lorentz.unpack(&f, options.theta))
        .transpose()?;

    let selected =
        if lorentz_result.is_some() && joint_result.coeffs.a3.abs() < joint_result.sigma(3) {
            ModelChoice::LorentzianOnly
        } else {
            ModelChoice::Joint
        };
    let excluded_hz = (0..n)
        .filter(|i| !keep.contains(i))
        .map(|i| win.freqs[i])
        .collect();
    Ok(PeakFitResult {
        delta_chi2: lorentz_result.as_ref().map(|l| l.chi2 - joint_result.chi2),
        joint: joint_result,
        lorentzian: lorentz_result,
        selected,
        window_hz: (win.freqs[0], win.freqs[n - 1]),
        n_bins: keep.len(),
        excluded_hz,
    })
}
