use super::{PipelineError, Result};
use crate::constants::angular_to_hz;
use crate::fit::{
    discriminate_noise, dispersive_slope, extract_noise_psd, fit_background, fit_cooling_curve,
    fit_peak, peak_initial_guess, subtract_background, BackgroundFit, BackgroundFitOptions,
    CoolingPoint, DispersivePoint, FitError, Measured, PeakFitOptions, PsdEstimate,
};
use crate::io::{
    calibrate_with_tone, length_noise_from_frequency, CoolingReport, ExperimentConfig, PeakRecord,
};
use crate::physics::{backaction_occupancy, effective_temperature, sideband_angle};
use crate::spectrum::{
    detection_filter_c, evaluate_background, peak_model, DetectionConfig, LineshapeCoeffs,
    Spectrum, Units,
};

/// Half-width of the peak search around the bare mode frequency, Hz.
pub const SEARCH_HALF_WIDTH_HZ: f64 = 25e3;
/// The search window is widened until it spans this many guessed widths
/// either side of the guessed peak.
const SEARCH_WIDTHS: f64 = 4.0;
const SEARCH_WIDENINGS: usize = 4;
/// Half-width of the lineshape fit window, in peak widths.
pub const PEAK_WINDOW_WIDTHS: f64 = 8.0;
/// Half-width of the region withheld from the background fit, in peak widths.
pub const EXCLUSION_WIDTHS: f64 = 10.0;
const MIN_EXCLUSION_HZ: f64 = 20e3;
/// Bins either side of the calibration tone kept out of every fit.
const TONE_GUARD_BINS: f64 = 3.0;
/// Half-width, in peak widths, withheld from the background refit once the
/// lineshape has been removed.
const CORE_WIDTHS: f64 = 3.0;
const MIN_CORE_BINS: f64 = 10.0;
const BACKFIT_ROUNDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AnalysisOptions {
    /// Lineshape fit window, Hz. Chosen from the peak guess when absent.
    pub window_hz: Option<(f64, f64)>,
    /// Skip the background fit and fit the calibrated spectrum directly.
    pub skip_background: bool,
}

#[derive(Debug, Clone)]
pub struct SpectrumAnalysis {
    pub record: PeakRecord,
    pub calibrated: Spectrum,
    /// Calibrated spectrum with the fitted background removed.
    pub subtracted: Spectrum,
}

fn clip_around(window: (f64, f64), center: f64, guard: f64, avoid: Option<f64>) -> (f64, f64) {
    let Some(t) = avoid else { return window };
    let (mut lo, mut hi) = window;
    if t >= lo - guard && t <= hi + guard {
        if t > center {
            hi = hi.min(t - guard);
        } else {
            lo = lo.max(t + guard);
        }
    }
    (lo, hi)
}

/// Peak guess around `f_m`. The search widens until it holds the guessed
/// peak with room to spare, which also follows large optical-spring shifts.
fn search_peak(
    spectrum: &Spectrum,
    f_m: f64,
    guard: f64,
    tone_hz: Option<f64>,
    detection: &DetectionConfig,
) -> Result<LineshapeCoeffs> {
    let mut half = SEARCH_HALF_WIDTH_HZ;
    let mut attempt = Err(FitError::NoPeak {
        f_lo: f_m,
        f_hi: f_m,
    });
    for _ in 0..SEARCH_WIDENINGS {
        let search = clip_around((f_m - half, f_m + half), f_m, guard, tone_hz);
        attempt = peak_initial_guess(spectrum, search, detection);
        half = match &attempt {
            Ok(g) => {
                let f = angular_to_hz(g.omega_eff);
                let needed = SEARCH_WIDTHS * angular_to_hz(g.gamma_eff);
                if f - needed >= search.0 && f + needed <= search.1 {
                    break;
                }
                ((f - f_m).abs() + needed).max(2.0 * half)
            }
            Err(FitError::NoPeak { .. }) => 2.0 * half,
            Err(_) => break,
        };
    }
    Ok(attempt?)
}

fn subtract_with(calibrated: &Spectrum, fit: &BackgroundFit) -> Result<Spectrum> {
    let bg = evaluate_background(&fit.model, calibrated.grid(), calibrated.units())?;
    Ok(subtract_background(calibrated, &bg)?)
}

/// `spectrum` minus the fitted mechanical lineshape, local offset and slope
/// excluded.
fn remove_lineshape(
    spectrum: &Spectrum,
    c: &LineshapeCoeffs,
    detection: &DetectionConfig,
) -> Result<Spectrum> {
    let peak = LineshapeCoeffs {
        a0: 0.0,
        a1: 0.0,
        ..*c
    };
    let grid = *spectrum.grid();
    let values = (0..grid.len)
        .map(|i| {
            let w = grid.angular(i);
            spectrum.values()[i] - peak_model(w, detection_filter_c(w, detection).norm_sqr(), &peak)
        })
        .collect();
    Ok(Spectrum::new_signed(
        grid,
        values,
        spectrum.units(),
        spectrum.n_averages(),
    )?)
}

/// n_eff from a_eff = (g₀/2π)²(2n_eff + 1), with `g0_hz` = g₀/2π, and the
/// matching effective temperature at Ω_eff (rad/s).
pub fn occupancy_from_area(a_eff: Measured, omega_eff: f64, g0_hz: f64) -> (Measured, f64) {
    let g2 = g0_hz * g0_hz;
    let n = Measured::new(0.5 * (a_eff.value / g2 - 1.0), 0.5 * a_eff.sigma / g2);
    (n, effective_temperature(n.value, omega_eff))
}

/// Calibrates, removes the background from, and fits the peak of one
/// spectrum of the named mode.
pub fn analyze_spectrum(
    spectrum: &Spectrum,
    config: &ExperimentConfig,
    mode_label: &str,
    options: &AnalysisOptions,
) -> Result<SpectrumAnalysis> {
    let mode = config.mode(mode_label)?;
    let cavity = config.cavity_spec()?;
    let detection = config.detection_config();
    let tone = config.calibration_tone;

    let calibrated = match (spectrum.units(), &tone) {
        (Units::RawVolts2, Some(t)) => calibrate_with_tone(spectrum, t)?,
        (Units::RawVolts2, None) => {
            return Err(PipelineError::Invalid(
                "raw spectrum needs a calibration tone in the configuration".into(),
            ))
        }
        _ => spectrum.clone(),
    };
    let calibration_scale = calibrated
        .metadata
        .get("calibration_scale")
        .and_then(|s| s.parse().ok());
    let step = calibrated.f_step();
    let guard = TONE_GUARD_BINS * step;
    let tone_hz = tone.map(|t| t.frequency_hz);

    let f_m = angular_to_hz(mode.omega_m);
    let guess = match options.window_hz {
        Some(w) => {
            peak_initial_guess(&calibrated, clip_around(w, f_m, guard, tone_hz), &detection)?
        }
        None => search_peak(&calibrated, f_m, guard, tone_hz, &detection)?,
    };
    let f_peak = angular_to_hz(guess.omega_eff);
    let width_hz = angular_to_hz(guess.gamma_eff);

    let theta = sideband_angle(&cavity, mode.omega_m).ok();
    let fit_options = PeakFitOptions {
        theta,
        reference: Some(&calibrated),
        ..PeakFitOptions::default()
    };
    let seeded = PeakFitOptions {
        init: Some(guess),
        ..fit_options
    };
    let mut window = match options.window_hz {
        Some(w) => w,
        None => {
            let half = PEAK_WINDOW_WIDTHS * width_hz;
            clip_around((f_peak - half, f_peak + half), f_peak, guard, tone_hz)
        }
    };

    let (subtracted, background, fit) = if options.skip_background {
        let fit = fit_peak(&calibrated, window, &detection, &seeded)?;
        (calibrated.clone(), None, fit)
    } else {
        let mut fixed = Vec::new();
        if let Some((lo, hi)) = options.window_hz {
            fixed.push((lo, hi));
        }
        for other in config.modes.iter().filter(|m| m.label != mode_label) {
            fixed.push((
                other.frequency_hz - SEARCH_HALF_WIDTH_HZ,
                other.frequency_hz + SEARCH_HALF_WIDTH_HZ,
            ));
        }
        if let Some(t) = tone_hz {
            fixed.push((t - guard, t + guard));
        }
        let half = (EXCLUSION_WIDTHS * width_hz).max(MIN_EXCLUSION_HZ);
        let mut exclusions = fixed.clone();
        exclusions.push((f_peak - half, f_peak + half));
        let mut bg_fit = fit_background(&calibrated, &exclusions, &BackgroundFitOptions::auto())?;
        let mut subtracted = subtract_with(&calibrated, &bg_fit)?;
        let start = PeakFitOptions {
            init: Some(LineshapeCoeffs { a0: 0.0, ..guess }),
            ..fit_options
        };
        let mut fit = fit_peak(&subtracted, window, &detection, &start)?;

        // the dispersive wings reach far past any exclusion, so alternate:
        // refit the background with the fitted lineshape removed
        for _ in 0..BACKFIT_ROUNDS {
            let c = fit.joint.coeffs;
            let f_c = angular_to_hz(c.omega_eff);
            let w_c = angular_to_hz(c.gamma_eff);
            let without_peak = remove_lineshape(&calibrated, &c, &detection)?;
            let mut exclusions = fixed.clone();
            let core = (CORE_WIDTHS * w_c).max(MIN_CORE_BINS * step);
            exclusions.push((f_c - core, f_c + core));
            bg_fit = fit_background(&without_peak, &exclusions, &BackgroundFitOptions::auto())?;
            subtracted = subtract_with(&calibrated, &bg_fit)?;
            if options.window_hz.is_none() {
                let half = PEAK_WINDOW_WIDTHS * w_c;
                window = clip_around((f_c - half, f_c + half), f_c, guard, tone_hz);
            }
            let init = PeakFitOptions {
                init: Some(c),
                ..fit_options
            };
            fit = fit_peak(&subtracted, window, &detection, &init)?;
        }
        (subtracted, Some(bg_fit), fit)
    };

    let joint = &fit.joint;
    let a_eff = match joint.a_eff {
        Some(a) => a,
        None => Measured::new(joint.coeffs.a2, joint.sigma(2)),
    };
    let gamma_eff = joint.gamma_eff();
    let cov = &joint.covariance;
    let a_eff_gamma_covariance = match (joint.a_eff, theta) {
        (Some(_), Some(th)) => cov[2][5] + cov[3][5] / th.tan(),
        _ => cov[2][5],
    };
    let omega_eff = joint.omega_eff();
    let gamma_opt = Measured::new(gamma_eff.value - mode.gamma_m, gamma_eff.sigma);
    let (n_eff, t_eff_k) = match config.mode_config(mode_label)?.g0_hz {
        Some(g) => {
            let (n, t) = occupancy_from_area(a_eff, omega_eff.value, g);
            (Some(n), Some(t))
        }
        None => (None, None),
    };
    let record = PeakRecord {
        source: spectrum.metadata.get("source").cloned(),
        mode: mode_label.to_string(),
        calibration_scale,
        background,
        a_eff,
        gamma_eff,
        a_eff_gamma_covariance,
        omega_eff,
        gamma_opt,
        a3: joint.a3(),
        q_eff: omega_eff.value / gamma_eff.value,
        n_eff,
        t_eff_k,
        fit,
    };
    Ok(SpectrumAnalysis {
        record,
        calibrated,
        subtracted,
    })
}

/// Cooling curve, dispersive slope, noise-source verdict and PSDs for a
/// series of peaks of one mode.
pub fn analyze_cooling(
    records: &[PeakRecord],
    config: &ExperimentConfig,
    mode_label: &str,
) -> Result<CoolingReport> {
    if let Some(r) = records.iter().find(|r| r.mode != mode_label) {
        return Err(PipelineError::Invalid(format!(
            "peak of mode `{}` in a `{mode_label}` series",
            r.mode
        )));
    }
    let mode = config.mode(mode_label)?;
    let cavity = config.cavity_spec()?;
    let points: Vec<CoolingPoint> = records
        .iter()
        .map(|r| CoolingPoint {
            gamma_eff: r.gamma_eff.value,
            a_eff: r.a_eff.value,
            sigma: r.a_eff.sigma,
            gamma_sigma: r.gamma_eff.sigma,
            covariance: r.a_eff_gamma_covariance,
        })
        .collect();
    let n_ba = backaction_occupancy(&cavity, mode.omega_m).unwrap_or(0.0);
    let curve = fit_cooling_curve(&points, &mode, n_ba + 0.5)?;

    let dispersive: Vec<DispersivePoint> = records
        .iter()
        .map(|r| DispersivePoint {
            gamma_opt: r.gamma_opt.value,
            a3: r.a3.value,
            sigma: r.a3.sigma,
        })
        .collect();
    let slope = dispersive_slope(&dispersive).ok();
    let theta = sideband_angle(&cavity, mode.omega_m).ok();
    let discrimination = match (slope, theta) {
        (Some(s), Some(th)) => Some(discriminate_noise(curve.b2, s, th)),
        _ => None,
    };
    let noise = match &discrimination {
        Some(d) => Some(extract_noise_psd(&curve, &mode, &cavity, d)?),
        None => None,
    };
    let s_ll_m2_per_hz = match &noise {
        Some(n) if cavity.cavity_length.is_some() && cavity.laser_frequency.is_some() => {
            let per = length_noise_from_frequency(1.0, &cavity)?;
            Some(PsdEstimate {
                value: per * n.s_nu_nu.value,
                sigma: per * n.s_nu_nu.sigma,
                upper_limit: n.s_nu_nu.upper_limit,
            })
        }
        _ => None,
    };
    let t_min = effective_temperature(curve.n_min.value, mode.omega_m);
    let q_min = mode.omega_m / curve.gamma_min.value;
    Ok(CoolingReport {
        mode: mode_label.to_string(),
        t_eff_min_k: Measured::new(t_min, t_min * curve.n_min.relative()),
        q_eff_min: Measured::new(q_min, q_min * curve.gamma_min.relative()),
        curve,
        dispersive_slope: slope,
        discrimination,
        noise,
        s_ll_m2_per_hz,
    })
}
