//! Whitespace-separated plot data and matching gnuplot scripts.

use sbcool::constants::{angular_to_hz, hz_to_angular};
use sbcool::fit::CoolingCurveResult;
use sbcool::io::PeakRecord;
use sbcool::pipeline::SpectrumAnalysis;
use sbcool::spectrum::{detection_filter_c, peak_model, DetectionConfig};

const CURVE_POINTS: usize = 200;

/// Columns: frequency (Hz), background-subtracted data, selected fit,
/// Lorentzian-only fit, residual. Bins inside the fit window only.
pub fn peak_data(analysis: &SpectrumAnalysis, detection: &DetectionConfig) -> String {
    let fit = &analysis.record.fit;
    let (lo, hi) = fit.window_hz;
    let spectrum = &analysis.subtracted;
    let grid = spectrum.grid();
    let mut out = String::from("# f_hz\tdata\tfit\tlorentzian\tresidual\n");
    for i in 0..grid.len {
        let f = grid.frequency(i);
        if f < lo || f > hi {
            continue;
        }
        let w = hz_to_angular(f);
        let c2 = detection_filter_c(w, detection).norm_sqr();
        let data = spectrum.values()[i];
        let best = peak_model(w, c2, &fit.best().coeffs);
        let lorentzian = fit
            .lorentzian
            .as_ref()
            .map_or(f64::NAN, |l| peak_model(w, c2, &l.coeffs));
        out.push_str(&format!(
            "{f:.6e}\t{data:.8e}\t{best:.8e}\t{lorentzian:.8e}\t{:.8e}\n",
            data - best
        ));
    }
    out
}

pub fn peak_script(data_file: &str, title: &str) -> String {
    format!(
        "set xlabel 'frequency (Hz)'\n\
         set ylabel 'PSD (Hz^2/Hz)'\n\
         set title '{title}' noenhanced\n\
         set multiplot layout 2,1\n\
         plot '{data_file}' using 1:2 with points pt 7 ps 0.4 title 'data', \\\n\
         \x20    '' using 1:3 with lines lw 2 title 'fit', \\\n\
         \x20    '' using 1:4 with lines dt 2 title 'Lorentzian only'\n\
         set ylabel 'residual'\n\
         plot '{data_file}' using 1:5 with points pt 7 ps 0.4 notitle\n\
         unset multiplot\n"
    )
}

/// Two data blocks: the measured occupancies with errors, then the fitted
/// curve and its thermal branch on a logarithmic grid of Γ_eff (Hz).
pub fn cooling_data(records: &[PeakRecord], curve: &CoolingCurveResult) -> String {
    let g_hz = angular_to_hz(curve.g0.value);
    let two_g2 = 2.0 * g_hz * g_hz;
    let occupancy = |a: f64| a / two_g2 - 0.5;

    let mut out = String::from("# gamma_eff_hz\tn_eff\tsigma\n");
    let mut sorted: Vec<&PeakRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.gamma_eff.value.total_cmp(&b.gamma_eff.value));
    for r in &sorted {
        out.push_str(&format!(
            "{:.6e}\t{:.8e}\t{:.8e}\n",
            angular_to_hz(r.gamma_eff.value),
            occupancy(r.a_eff.value),
            r.a_eff.sigma / two_g2
        ));
    }

    out.push_str("\n\n# gamma_eff_hz\tn_fit\tn_thermal\n");
    let lo = sorted
        .first()
        .map_or(curve.gamma_min.value, |r| r.gamma_eff.value)
        .min(curve.gamma_min.value)
        / 2.0;
    let hi = sorted
        .last()
        .map_or(curve.gamma_min.value, |r| r.gamma_eff.value)
        .max(curve.gamma_min.value)
        * 2.0;
    for k in 0..CURVE_POINTS {
        let gamma = lo * (hi / lo).powf(k as f64 / (CURVE_POINTS - 1) as f64);
        let thermal = curve.b1.value * (1.0 / gamma + curve.offset_coefficient);
        out.push_str(&format!(
            "{:.6e}\t{:.8e}\t{:.8e}\n",
            angular_to_hz(gamma),
            occupancy(curve.evaluate(gamma)),
            occupancy(thermal)
        ));
    }
    out
}

pub fn cooling_script(data_file: &str) -> String {
    format!(
        "set logscale xy\n\
         set xlabel 'Gamma_eff/2pi (Hz)'\n\
         set ylabel 'n_eff'\n\
         plot '{data_file}' index 0 using 1:2:3 with yerrorbars pt 7 title 'measured', \\\n\
         \x20    '' index 1 using 1:2 with lines lw 2 title 'fit', \\\n\
         \x20    '' index 1 using 1:3 with lines dt 2 title 'thermal branch'\n"
    )
}
