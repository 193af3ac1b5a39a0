use serde::{Deserialize, Serialize};

use super::nlls::{nlls_fit, FitProblem, NllsFit};
use super::{median, periodogram_weights, FitError, Result};
use crate::spectrum::{BackgroundModel, BeatNote, Spectrum, META_NEGATIVE_BINS};

const MIN_RETAINED_BINS: usize = 20;
/// Bins averaged when scanning tail residuals for a beat note.
const BEAT_SCAN_WIDTH: usize = 11;
/// Significance of the smoothed excess needed to add a beat note.
const BEAT_DETECTION_Z: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackgroundFitOptions {
    /// Starting point; a beat note present here is always fitted.
    pub initial: Option<BackgroundModel>,
    /// Search the tail residuals for a beat note when none is given.
    pub detect_beat: bool,
}

impl BackgroundFitOptions {
    pub fn auto() -> Self {
        Self {
            initial: None,
            detect_beat: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFit {
    pub model: BackgroundModel,
    /// Parameter names in the order of `sigma`.
    pub parameters: Vec<String>,
    pub sigma: Vec<f64>,
    pub reduced_chi2: f64,
    pub retained_bins: usize,
    /// True when the tail exponent could not be resolved and was held fixed.
    pub exponent_fixed: bool,
}

struct Retained {
    freqs: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
    f_ref: f64,
}

impl Retained {
    fn log_ratio(&self) -> Vec<f64> {
        self.freqs.iter().map(|f| (f / self.f_ref).ln()).collect()
    }
}

fn tail_fit(data: &Retained, init: &BackgroundModel, fit_exponent: bool) -> Result<NllsFit> {
    let lr = data.log_ratio();
    let exponent = init.tail_exponent;
    let model = |p: &[f64], out: &mut [f64]| {
        let e = if fit_exponent { p[2] } else { exponent };
        for (o, l) in out.iter_mut().zip(&lr) {
            *o = p[0] + p[1] * (-e * l).exp();
        }
    };
    let level = init.tail_amplitude * data.f_ref.powf(-init.tail_exponent);
    let mut initial = vec![init.tail_offset, level];
    let scale = median(&data.values).abs().max(f64::MIN_POSITIVE);
    let mut scales = vec![scale, scale];
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); 2];
    if fit_exponent {
        initial.push(exponent);
        scales.push(1.0);
        bounds.push((1e-3, 20.0));
    }
    nlls_fit(&FitProblem {
        model: &model,
        data: &data.values,
        weights: &data.weights,
        initial,
        bounds: Some(bounds),
        scales: Some(scales),
    })
}

fn full_fit(
    data: &Retained,
    init: &BackgroundModel,
    beat: BeatNote,
    fit_exponent: bool,
) -> Result<NllsFit> {
    let lr = data.log_ratio();
    let freqs = &data.freqs;
    let exponent = init.tail_exponent;
    let off = if fit_exponent { 3 } else { 2 };
    let model = |p: &[f64], out: &mut [f64]| {
        let e = if fit_exponent { p[2] } else { exponent };
        let (center, width, amp) = (p[off], p[off + 1], p[off + 2]);
        for ((o, l), f) in out.iter_mut().zip(&lr).zip(freqs) {
            let x = 2.0 * (f - center) / width;
            *o = p[0] + p[1] * (-e * l).exp() + amp / (1.0 + x * x);
        }
    };
    let level = init.tail_amplitude * data.f_ref.powf(-init.tail_exponent);
    let scale = median(&data.values).abs().max(f64::MIN_POSITIVE);
    let mut initial = vec![init.tail_offset, level];
    let mut scales = vec![scale, scale];
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); 2];
    if fit_exponent {
        initial.push(exponent);
        scales.push(1.0);
        bounds.push((1e-3, 20.0));
    }
    let (f_lo, f_hi) = (freqs[0], freqs[freqs.len() - 1]);
    let step = (f_hi - f_lo) / freqs.len() as f64;
    initial.extend([beat.center_hz, beat.width_hz, beat.amplitude]);
    scales.extend([
        beat.center_hz.abs().max(step),
        beat.width_hz,
        beat.amplitude.abs().max(scale),
    ]);
    bounds.extend([
        (f_lo, f_hi),
        (0.1 * step, f_hi - f_lo),
        (f64::NEG_INFINITY, f64::INFINITY),
    ]);
    nlls_fit(&FitProblem {
        model: &model,
        data: &data.values,
        weights: &data.weights,
        initial,
        bounds: Some(bounds),
        scales: Some(scales),
    })
}

/// Tail fit with the exponent free, falling back to the initial exponent
/// when the tail is too weak to resolve it.
fn with_exponent_fallback(fit: impl Fn(bool) -> Result<NllsFit>) -> Result<(NllsFit, bool)> {
    match fit(true) {
        Ok(f) => Ok((f, false)),
        Err(FitError::Degenerate | FitError::NotConverged { .. }) => {
            log::warn!("tail exponent unresolved; holding it fixed");
            fit(false).map(|f| (f, true))
        }
        Err(e) => Err(e),
    }
}

fn auto_initial(data: &Retained) -> BackgroundModel {
    let n = data.values.len();
    let edge = (n / 10).max(5).min(n);
    let c0 = median(&data.values[n - edge..]);
    let low = median(&data.values[..edge.min(n / 2).max(1)]);
    let excess = (low - c0).max(1e-3 * c0.abs());
    let p = BackgroundModel::DEFAULT_TAIL_EXPONENT;
    BackgroundModel {
        tail_offset: c0,
        tail_amplitude: excess * data.f_ref.powf(p),
        tail_exponent: p,
        beat: None,
    }
}

/// Largest significant bump in the data relative to the fitted tail.
fn find_beat(data: &Retained, tail: &BackgroundModel, n_averages: u32) -> Option<BeatNote> {
    let n = data.values.len();
    if n < 3 * BEAT_SCAN_WIDTH {
        return None;
    }
    let ratio: Vec<f64> = data
        .values
        .iter()
        .zip(&data.freqs)
        .map(|(v, f)| v / tail.value(*f) - 1.0)
        .collect();
    let half = BEAT_SCAN_WIDTH / 2;
    let smooth: Vec<f64> = (half..n - half)
        .map(|i| ratio[i - half..=i + half].iter().sum::<f64>() / BEAT_SCAN_WIDTH as f64)
        .collect();
    let (k, &peak) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let sigma = 1.0 / ((n_averages as f64) * BEAT_SCAN_WIDTH as f64).sqrt();
    if peak < BEAT_DETECTION_Z * sigma {
        return None;
    }
    let center = k + half;
    let mut lo = k;
    while lo > 0 && smooth[lo] > 0.5 * peak {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < smooth.len() && smooth[hi] > 0.5 * peak {
        hi += 1;
    }
    let width = (data.freqs[hi + half] - data.freqs[lo + half]).max(data.freqs[1] - data.freqs[0]);
    let f = data.freqs[center];
    Some(BeatNote {
        center_hz: f,
        width_hz: width,
        amplitude: peak * tail.value(f),
    })
}

fn unpack(
    p: &[f64],
    f_ref: f64,
    init: &BackgroundModel,
    fit_exponent: bool,
    with_beat: bool,
) -> BackgroundModel {
    let exponent = if fit_exponent {
        p[2]
    } else {
        init.tail_exponent
    };
    let off = if fit_exponent { 3 } else { 2 };
    BackgroundModel {
        tail_offset: p[0],
        tail_amplitude: p[1] * f_ref.powf(exponent),
        tail_exponent: exponent,
        beat: with_beat.then(|| BeatNote {
            center_hz: p[off],
            width_hz: p[off + 1],
            amplitude: p[off + 2],
        }),
    }
}

/// Fits the phenomenological background on bins outside every exclusion
/// window (Hz intervals covering the mechanical peaks).
pub fn fit_background(
    spectrum: &Spectrum,
    exclusions: &[(f64, f64)],
    options: &BackgroundFitOptions,
) -> Result<BackgroundFit> {
    let keep: Vec<usize> = (0..spectrum.len())
        .filter(|&i| {
            let f = spectrum.frequency(i);
            !exclusions.iter().any(|&(lo, hi)| f >= lo && f <= hi)
        })
        .collect();
    if keep.len() < MIN_RETAINED_BINS {
        return Err(FitError::InsufficientData {
            points: keep.len(),
            params: MIN_RETAINED_BINS,
        });
    }
    let freqs: Vec<f64> = keep.iter().map(|&i| spectrum.frequency(i)).collect();
    if freqs[0] <= 0.0 {
        return Err(FitError::InvalidInput(
            "background fit needs positive frequencies".into(),
        ));
    }
    let values: Vec<f64> = keep.iter().map(|&i| spectrum.values()[i]).collect();
    let weights = periodogram_weights(&values, spectrum.n_averages())?;
    let data = Retained {
        f_ref: freqs[0],
        freqs,
        values,
        weights,
    };

    let init = options.initial.unwrap_or_else(|| auto_initial(&data));
    let (tail, tail_fixed) = with_exponent_fallback(|free| tail_fit(&data, &init, free))?;
    let tail_model = unpack(&tail.params, data.f_ref, &init, !tail_fixed, false);

    let beat = init.beat.or_else(|| {
        if options.detect_beat {
            find_beat(&data, &tail_model, spectrum.n_averages())
        } else {
            None
        }
    });
    let (fit, model, fixed) = match beat {
        None => (tail, tail_model, tail_fixed),
        Some(beat) => {
            let seed = BackgroundModel {
                beat: None,
                ..tail_model
            };
            let (fit, fixed) = with_exponent_fallback(|free| full_fit(&data, &seed, beat, free))?;
            let model = unpack(&fit.params, data.f_ref, &seed, !fixed, true);
            (fit, model, fixed)
        }
    };

    let mut parameters = vec![
        "tail_offset".to_string(),
        "tail_level_at_first_bin".to_string(),
    ];
    if !fixed {
        parameters.push("tail_exponent".into());
    }
    if model.beat.is_some() {
        parameters.extend(["beat_center_hz", "beat_width_hz", "beat_amplitude"].map(String::from));
    }
    let sigma = (0..fit.params.len()).map(|i| fit.sigma(i)).collect();
    Ok(BackgroundFit {
        model,
        parameters,
        sigma,
        reduced_chi2: fit.reduced_chi2,
        retained_bins: keep.len(),
        exponent_fixed: fixed,
    })
}

/// Bin-wise difference `spectrum − background`. Negative bins are kept and
/// counted in the metadata.
pub fn subtract_background(spectrum: &Spectrum, background: &Spectrum) -> Result<Spectrum> {
    spectrum.check_compatible(background)?;
    let values: Vec<f64> = spectrum
        .values()
        .iter()
        .zip(background.values())
        .map(|(a, b)| a - b)
        .collect();
    let negatives = values.iter().filter(|v| **v < 0.0).count();
    let mut out = Spectrum::new_signed(
        *spectrum.grid(),
        values,
        spectrum.units(),
        spectrum.n_averages(),
    )?;
    for (k, v) in &spectrum.metadata {
        out.metadata.entry(k.clone()).or_insert_with(|| v.clone());
    }
    out.metadata
        .insert(META_NEGATIVE_BINS.into(), negatives.to_string());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{
        evaluate_background, synthesize_measured_spectrum, FrequencyGrid, Units,
    };

    fn grid() -> FrequencyGrid {
        FrequencyGrid::spanning(100e3, 600e3, 100.0).unwrap()
    }

    fn tail() -> BackgroundModel {
        BackgroundModel {
            tail_offset: 0.002,
            tail_amplitude: 0.02 * 1e10,
            tail_exponent: 2.0,
            beat: None,
        }
    }

    fn within(value: f64, truth: f64, sigma: f64, n: f64) -> bool {
        (value - truth).abs() <= n * sigma
    }

    #[test]
    fn recovers_pure_tail() {
        let truth = tail();
        let model = evaluate_background(&truth, &grid(), Units::Hz2PerHz).unwrap();
        let data = synthesize_measured_spectrum(&model, 200, 5).unwrap();
        let fit = fit_background(&data, &[], &BackgroundFitOptions::auto()).unwrap();
        assert!(fit.model.beat.is_none());
        assert!(within(
            fit.model.tail_offset,
            truth.tail_offset,
            fit.sigma[0],
            3.0
        ));
        assert!(within(
            fit.model.tail_exponent,
            truth.tail_exponent,
            fit.sigma[2],
            3.0
        ));
        assert!((fit.reduced_chi2 - 1.0).abs() < 0.1);
    }

    #[test]
    fn recovers_tail_and_beat() {
        let beat = BeatNote {
            center_hz: 480e3,
            width_hz: 2e3,
            amplitude: 0.05,
        };
        let truth = BackgroundModel {
            beat: Some(beat),
            ..tail()
        };
        let model = evaluate_background(&truth, &grid(), Units::Hz2PerHz).unwrap();
        let data = synthesize_measured_spectrum(&model, 200, 6).unwrap();
        let fit = fit_background(&data, &[], &BackgroundFitOptions::auto()).unwrap();
        let b = fit.model.beat.expect("beat not found");
        assert!(within(b.center_hz, beat.center_hz, fit.sigma[3], 3.0));
        assert!(within(b.width_hz, beat.width_hz, fit.sigma[4], 3.0));
        assert!(within(b.amplitude, beat.amplitude, fit.sigma[5], 3.0));
        assert!(within(fit.model.tail_exponent, 2.0, fit.sigma[2], 3.0));
    }

    #[test]
    fn exclusions_hide_a_peak() {
        let truth = tail();
        let g = grid();
        let bg = evaluate_background(&truth, &g, Units::Hz2PerHz).unwrap();
        let mut values = bg.values().to_vec();
        for (i, v) in values.iter_mut().enumerate() {
            let x = (g.frequency(i) - 256e3) / 500.0;
            *v += 0.1 / (1.0 + x * x);
        }
        let spec = Spectrum::new(g, values, Units::Hz2PerHz, 1).unwrap();
        let data = synthesize_measured_spectrum(&spec, 200, 8).unwrap();
        let fit = fit_background(&data, &[(196e3, 316e3)], &BackgroundFitOptions::auto()).unwrap();
        assert!(fit.model.beat.is_none());
        assert!(within(fit.model.tail_exponent, 2.0, fit.sigma[2], 3.0));
        assert!(fit.retained_bins < g.len);
    }

    #[test]
    fn flat_data_holds_exponent() {
        let model =
            evaluate_background(&BackgroundModel::flat(1.0), &grid(), Units::Hz2PerHz).unwrap();
        let data = synthesize_measured_spectrum(&model, 100, 2).unwrap();
        let fit = fit_background(&data, &[], &BackgroundFitOptions::auto()).unwrap();
        let level = fit.model.value(300e3);
        assert!((level - 1.0).abs() < 0.01);
    }

    #[test]
    fn too_few_bins() {
        let data = evaluate_background(&tail(), &grid(), Units::Hz2PerHz).unwrap();
        let r = fit_background(&data, &[(0.0, 1e9)], &BackgroundFitOptions::auto());
        assert!(matches!(r, Err(FitError::InsufficientData { .. })));
    }

    #[test]
    fn subtraction_properties() {
        let g = grid();
        let bg = evaluate_background(&tail(), &g, Units::Hz2PerHz).unwrap();
        let data = synthesize_measured_spectrum(&bg, 100, 3).unwrap();
        let res = subtract_background(&data, &bg).unwrap();
        let mean = res
            .values()
            .iter()
            .zip(bg.values())
            .map(|(r, b)| r / b)
            .sum::<f64>()
            / g.len as f64;
        assert!(mean.abs() < 3.0 * 0.1 / (g.len as f64).sqrt());
        assert!(res.metadata[META_NEGATIVE_BINS].parse::<usize>().unwrap() > 0);

        let zero = Spectrum::new(g, vec![0.0; g.len], Units::Hz2PerHz, 1).unwrap();
        assert_eq!(
            subtract_background(&data, &zero).unwrap().values(),
            data.values()
        );

        let other = Spectrum::new(
            FrequencyGrid::new(0.0, 1.0, 10).unwrap(),
            vec![0.0; 10],
            Units::Hz2PerHz,
            1,
        )
        .unwrap();
        assert!(subtract_background(&data, &other).is_err());
        let raw = bg.clone().assume_units(Units::RawVolts2);
        assert!(subtract_background(&data, &raw).is_err());
    }
}
