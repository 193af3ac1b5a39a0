use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const PHASE_CONFIG: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../configs/mode01_phase.json"
);
const AMPLITUDE_CONFIG: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../configs/mode02_amplitude.json"
);
const TAU: f64 = std::f64::consts::TAU;

fn sbcool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbcool"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sbcool(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn files_with(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_str().unwrap().ends_with(suffix))
        .collect();
    v.sort();
    v
}

fn measured(v: &Value) -> (f64, f64) {
    (v["value"].as_f64().unwrap(), v["sigma"].as_f64().unwrap())
}

fn within(v: &Value, truth: f64, k: f64) -> bool {
    let (x, s) = measured(v);
    (x - truth).abs() <= k * s
}

fn synth(config: &str, seed: &str, dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth",
        "--config",
        config,
        "--seed",
        seed,
        "--out",
        path(dir),
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn fit_all(config: &str, spectra: &Path, out: &Path) -> Vec<PathBuf> {
    let files = files_with(spectra, ".csv");
    let mut args = vec!["fit-peak", "--config", config, "--out", path(out)];
    args.extend(files.iter().map(|p| path(p)));
    ok(&args);
    files_with(out, ".fit.json")
}

fn cooling(config: &str, reports: &[PathBuf], out: &Path) -> Value {
    let mut args = vec!["cooling-curve", "--config", config, "--out", path(out)];
    args.extend(reports.iter().map(|p| path(p)));
    ok(&args);
    json(&out.join("cooling.json"))
}

#[test]
fn golden_path_recovers_truth() {
    let tmp = TempDir::new().unwrap();
    let (s, f, c) = (
        tmp.path().join("s"),
        tmp.path().join("f"),
        tmp.path().join("c"),
    );
    synth(PHASE_CONFIG, "5", &s, &[]);
    let reports = fit_all(PHASE_CONFIG, &s, &f);
    assert_eq!(reports.len(), 7);
    let report = cooling(PHASE_CONFIG, &reports, &c);
    let manifest = json(&s.join("manifest.json"));

    let curve = &report["cooling"]["curve"];
    let g0 = TAU * manifest["g0_hz"].as_f64().unwrap();
    assert!(within(&curve["g0"], g0, 3.0), "g0 {} vs {g0}", curve["g0"]);
    let n_min = manifest["optimum"]["n_min"].as_f64().unwrap();
    assert!(
        within(&curve["n_min"], n_min, 3.0),
        "n_min {} vs {n_min}",
        curve["n_min"]
    );
    let gamma_min = manifest["optimum"]["gamma_min"].as_f64().unwrap();
    assert!(within(&curve["gamma_min"], gamma_min, 3.0));
    let s_nu = manifest["noise"]["s_phi_phi"].as_f64().unwrap() * 256e3f64.powi(2);
    assert!(within(&report["cooling"]["noise"]["s_nu_nu"], s_nu, 3.0));
    assert_eq!(
        report["cooling"]["discrimination"]["dominance"],
        "phase_dominated"
    );

    // occupancies are filled in for every peak, temperature and Q reported
    let peaks = report["peaks"].as_array().unwrap();
    assert_eq!(peaks.len(), 7);
    assert!(peaks
        .iter()
        .all(|p| p["n_eff"]["value"].as_f64().unwrap() > 0.0 && p["t_eff_k"].is_number()));
    assert!(report["cooling"]["t_eff_min_k"]["value"].as_f64().unwrap() > 0.0);
    assert!(report["cooling"]["q_eff_min"]["value"].as_f64().unwrap() > 0.0);

    let plot = fs::read_to_string(c.join("cooling.plot.dat")).unwrap();
    let blocks: Vec<&str> = plot.split("\n\n\n").collect();
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[0].lines().filter(|l| !l.starts_with('#')).count(), 7);
}

#[test]
fn fit_peak_echoes_truth_at_fig4_width() {
    let tmp = TempDir::new().unwrap();
    let (s, f) = (tmp.path().join("s"), tmp.path().join("f"));
    synth(PHASE_CONFIG, "9", &s, &["--gamma-opt-hz", "2700"]);
    fit_all(PHASE_CONFIG, &s, &f);
    let truth = &json(&s.join("manifest.json"))["points"][0]["truth"];
    let peak = &json(&f.join("point_00.fit.json"))["peaks"][0];
    let gamma = truth["budget"]["gamma_eff"].as_f64().unwrap();
    assert!((gamma / TAU - 2.7e3).abs() < 1.0);
    assert!(
        within(&peak["gamma_eff"], gamma, 3.0),
        "{} vs {gamma}",
        peak["gamma_eff"]
    );
    assert!(within(
        &peak["a_eff"],
        truth["a_eff"].as_f64().unwrap(),
        3.0
    ));
    assert!(within(
        &peak["a3"],
        truth["coeffs"]["a3"].as_f64().unwrap(),
        3.0
    ));
}

#[test]
fn residual_column_averages_to_zero() {
    let tmp = TempDir::new().unwrap();
    let (s, f) = (tmp.path().join("s"), tmp.path().join("f"));
    synth(PHASE_CONFIG, "2", &s, &["--gamma-opt-hz", "1500,6000"]);
    fit_all(PHASE_CONFIG, &s, &f);
    for plot in files_with(&f, ".plot.dat") {
        let rows: Vec<Vec<f64>> = fs::read_to_string(&plot)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
            .collect();
        assert!(rows.len() > 50 && rows.iter().all(|r| r.len() == 5));
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r[4]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[4] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            mean.abs() < 4.0 * sd / n.sqrt(),
            "{}: mean {mean:e}, sd {sd:e}",
            plot.display()
        );
        for r in &rows {
            assert!((r[1] - r[2] - r[4]).abs() <= 1e-6 * r[1].abs().max(r[2].abs()));
        }
    }
}

#[test]
fn runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let dir = |name: &str| tmp.path().join(name);
    let grid = ["--gamma-opt-hz", "1000,3000,8000"];
    synth(PHASE_CONFIG, "17", &dir("s1"), &grid);
    synth(PHASE_CONFIG, "17", &dir("s2"), &grid);
    synth(PHASE_CONFIG, "18", &dir("s3"), &grid);
    fit_all(PHASE_CONFIG, &dir("s1"), &dir("f1"));
    fit_all(PHASE_CONFIG, &dir("s1"), &dir("f2"));
    for (a, b) in [("s1", "s2"), ("f1", "f2")] {
        let names: Vec<_> = files_with(&dir(a), "")
            .iter()
            .map(|p| p.file_name().unwrap().to_owned())
            .collect();
        assert!(names.len() >= 4);
        for name in names {
            let x = fs::read(dir(a).join(&name)).unwrap();
            assert!(
                x == fs::read(dir(b).join(&name)).unwrap(),
                "{name:?} differs"
            );
        }
    }
    let read = |d: &str| fs::read(dir(d).join("point_00.csv")).unwrap();
    assert_ne!(read("s1"), read("s3"));
}

#[test]
fn eight_point_grid_gives_eight_files_and_manifest() {
    let tmp = TempDir::new().unwrap();
    synth(PHASE_CONFIG, "1", tmp.path(), &["--grid", "0.3,4,8"]);
    assert_eq!(files_with(tmp.path(), ".csv").len(), 8);
    let manifest = json(&tmp.path().join("manifest.json"));
    let points = manifest["points"].as_array().unwrap();
    assert_eq!(points.len(), 8);
    let gamma_min_hz = manifest["optimum"]["gamma_min"].as_f64().unwrap() / TAU;
    let first = points[0]["gamma_opt_hz"].as_f64().unwrap();
    let last = points[7]["gamma_opt_hz"].as_f64().unwrap();
    assert!((first / gamma_min_hz - 0.3).abs() < 1e-9 && (last / gamma_min_hz - 4.0).abs() < 1e-9);

    let powered = tmp.path().join("p");
    synth(
        PHASE_CONFIG,
        "1",
        &powered,
        &["--grid", "0.3,4,8", "--grid-as-power"],
    );
    let m = json(&powered.join("manifest.json"));
    for (a, b) in points.iter().zip(m["points"].as_array().unwrap()) {
        assert!(b["input_power_w"].as_f64().unwrap() > 0.0);
        let (ga, gb) = (
            a["gamma_opt_hz"].as_f64().unwrap(),
            b["gamma_opt_hz"].as_f64().unwrap(),
        );
        assert!((ga / gb - 1.0).abs() < 1e-6);
    }
}

#[test]
fn unstable_drive_point_is_named() {
    let tmp = TempDir::new().unwrap();
    let out = sbcool(&[
        "synth",
        "--config",
        PHASE_CONFIG,
        "--seed",
        "1",
        "--out",
        path(tmp.path()),
        "--gamma-opt-hz",
        "1000,-500",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("drive point 1"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = sbcool(&["synth", "--config", PHASE_CONFIG, "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    assert!(files_with(tmp.path(), "").is_empty());
}

#[test]
fn flat_spectrum_reports_no_peak() {
    let tmp = TempDir::new().unwrap();
    // exponential periodogram noise for M = 1 around a flat level, from a
    // fixed linear congruential stream
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut text = String::from(
        "# units=hz2_per_hz\n# n_averages=1\n# f_start=2.0e5\n# f_step=50\nfrequency_hz,psd\n",
    );
    for i in 0..4000 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let u = ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        text.push_str(&format!(
            "{},{:e}\n",
            2.0e5 + 50.0 * i as f64,
            -0.01 * u.ln()
        ));
    }
    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, text).unwrap();
    let out = sbcool(&[
        "fit-peak",
        "--config",
        PHASE_CONFIG,
        "--mode",
        "(0,1)",
        "--out",
        path(tmp.path()),
        path(&flat),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("no peak"));
    assert!(!tmp.path().join("flat.fit.json").exists());
}

#[test]
fn dropping_highest_power_moves_b2_not_b1() {
    let tmp = TempDir::new().unwrap();
    let (s, f) = (tmp.path().join("s"), tmp.path().join("f"));
    synth(PHASE_CONFIG, "21", &s, &[]);
    let reports = fit_all(PHASE_CONFIG, &s, &f);
    let all = cooling(PHASE_CONFIG, &reports, &tmp.path().join("all"));
    // drive points are written in increasing order, so the last report is
    // the most strongly driven
    let fewer = cooling(
        PHASE_CONFIG,
        &reports[..reports.len() - 1],
        &tmp.path().join("fewer"),
    );
    let (b1, s1) = measured(&all["cooling"]["curve"]["b1"]);
    let (b1_j, _) = measured(&fewer["cooling"]["curve"]["b1"]);
    let (b2, _) = measured(&all["cooling"]["curve"]["b2"]);
    let (b2_j, _) = measured(&fewer["cooling"]["curve"]["b2"]);
    assert!((b1 - b1_j).abs() < s1, "b1 {b1} → {b1_j} (σ {s1})");
    assert!(b2 != b2_j);
}

#[test]
fn too_few_reports_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let (s, f) = (tmp.path().join("s"), tmp.path().join("f"));
    synth(PHASE_CONFIG, "4", &s, &["--gamma-opt-hz", "1000,3000"]);
    let reports = fit_all(PHASE_CONFIG, &s, &f);
    let mut args = vec![
        "cooling-curve",
        "--config",
        PHASE_CONFIG,
        "--out",
        path(tmp.path()),
    ];
    args.extend(reports.iter().map(|p| path(p)));
    let out = sbcool(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(!tmp.path().join("cooling.json").exists());
}

#[test]
fn mode02_campaign_effective_quality_factor() {
    let tmp = TempDir::new().unwrap();
    let (s, f) = (tmp.path().join("s"), tmp.path().join("f"));
    synth(AMPLITUDE_CONFIG, "3", &s, &[]);
    let reports = fit_all(AMPLITUDE_CONFIG, &s, &f);
    let report = cooling(AMPLITUDE_CONFIG, &reports, &tmp.path().join("c"));
    let (q, _) = measured(&report["cooling"]["q_eff_min"]);
    assert!(
        (30.0..=50.0).contains(&q) && (q - 46.0).abs() < 3.0,
        "Q_eff {q}"
    );
    assert_eq!(
        report["cooling"]["discrimination"]["dominance"],
        "amplitude_dominated"
    );
}

fn predict_rows(args: &[&str]) -> (Vec<String>, Vec<Vec<String>>) {
    let out = ok(args);
    let text = String::from_utf8(out.stdout).unwrap();
    let flags = text
        .lines()
        .filter(|l| l.starts_with('#'))
        .map(String::from)
        .collect();
    let rows = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(String::from).collect())
        .collect();
    (flags, rows)
}

fn cell(row: &[String], i: usize) -> f64 {
    row[i].parse().unwrap()
}

#[test]
fn predict_backaction_at_mechanical_detuning() {
    let (_, rows) = predict_rows(&[
        "predict",
        "--config",
        PHASE_CONFIG,
        "--mode",
        "(0,1)",
        "--sweep",
        "detuning-hz",
        "--from",
        "-256e3",
        "--to",
        "-256e3",
        "--n",
        "1",
        "--gamma-opt-hz",
        "1000",
    ]);
    assert_eq!(rows.len(), 1);
    assert!((cell(&rows[0], 2) - 0.0397).abs() < 5e-4);
}

#[test]
fn predict_q_sweep_scaling() {
    let (flags, rows) = predict_rows(&[
        "predict",
        "--config",
        PHASE_CONFIG,
        "--mode",
        "(0,1)",
        "--sweep",
        "q-factor",
        "--from",
        "1e6",
        "--to",
        "1e10",
        "--n",
        "5",
        "--gamma-opt-hz",
        "2000",
    ]);
    for w in rows.windows(2) {
        assert!((cell(&w[0], 5) / cell(&w[1], 5) - 10f64.sqrt()).abs() < 1e-6);
    }
    assert!(flags.iter().any(|f| f == "# n_min decreasing"));
}

#[test]
fn predict_detuning_sweep_shapes() {
    let (_, rows) = predict_rows(&[
        "predict",
        "--config",
        PHASE_CONFIG,
        "--mode",
        "(0,1)",
        "--sweep",
        "detuning-hz",
        "--from",
        "-600e3",
        "--to",
        "-100e3",
        "--n",
        "51",
        "--gamma-opt-hz",
        "2000",
    ]);
    assert_eq!(rows.len(), 51);
    let inv_cos: Vec<f64> = rows.iter().map(|r| 1.0 / cell(r, 7).cos().abs()).collect();
    let a: Vec<f64> = rows.iter().map(|r| cell(r, 8)).collect();
    let argmin = |v: &[f64]| (0..v.len()).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
    // both factors fall from the far-detuned end to a minimum between the
    // mechanical sideband and the cavity half-width, then rise again
    for v in [&inv_cos, &a] {
        let k = argmin(v);
        let delta = cell(&rows[k], 0);
        assert!((-300e3..=-150e3).contains(&delta), "minimum at {delta}");
        assert!(v[..=k].windows(2).all(|w| w[1] <= w[0]));
        assert!(v[k..].windows(2).all(|w| w[1] >= w[0]));
    }
    assert!(inv_cos[argmin(&inv_cos)] < 1.01);
    // the −480 kHz operating point, against the library
    let cavity = sbcool::io::ExperimentConfig::load(Path::new(PHASE_CONFIG))
        .unwrap()
        .cavity_spec()
        .unwrap();
    let row = &rows[12];
    assert!((cell(row, 0) + 480e3).abs() < 1e-6);
    let theta = sbcool::physics::sideband_angle(&cavity, TAU * 256e3).unwrap();
    assert!((cell(row, 7) - theta).abs() < 1e-9);
    assert!((1.0 / (2.0 * theta).sin() + 1.84).abs() < 0.02);
}

fn convert(args: &[&str]) -> Vec<f64> {
    let mut full = vec!["convert"];
    full.extend_from_slice(args);
    let out = ok(&full);
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect()
}

#[test]
fn convert_length_noise() {
    let length = 0.048;
    let nu = 299_792_458.0 / 1.064e-6;
    let v = convert(&[
        "--from",
        "s-nu-nu",
        "--to",
        "s-ll",
        "--config",
        PHASE_CONFIG,
        "1e-2",
        "2.2e-2",
    ]);
    assert!((v[0] / ((length / nu) * (length / nu) * 1e-2) - 1.0).abs() < 1e-9);
    assert!((v[0] / 2.9e-34 - 1.0).abs() < 0.01);
    // the converted value is half the commonly quoted 6e-34 m²/Hz
    assert!(v[1] > 6.0e-34 && v[1] < 6.5e-34 && v[0] < 0.5 * 6e-34);
    let back = convert(&[
        "--from",
        "s-ll",
        "--to",
        "s-nu-nu",
        "--cavity-length-m",
        "0.048",
        "--laser-wavelength-m",
        "1.064e-6",
        &format!("{:e}", v[1]),
    ]);
    assert!((back[0] / 2.2e-2 - 1.0).abs() < 1e-9);
}

#[test]
fn convert_phase_noise() {
    let v = convert(&[
        "--from",
        "s-nu-nu",
        "--to",
        "s-phi-phi",
        "--frequency-hz",
        "256e3",
        "2.2e-2",
    ]);
    assert!((v[0] / (2.2e-2 / 256e3f64.powi(2)) - 1.0).abs() < 1e-9);
    assert!((v[0] / 3.36e-13 - 1.0).abs() < 0.005);
    let half = convert(&[
        "--from",
        "s-nu-nu",
        "--to",
        "s-phi-phi",
        "--frequency-hz",
        "512e3",
        "2.2e-2",
    ]);
    assert!((half[0] / v[0] - 0.25).abs() < 1e-9);
    let out = sbcool(&["convert", "--from", "s-phi-phi", "--to", "s-nu-nu", "1e-13"]);
    assert_eq!(out.status.code(), Some(1));
}
