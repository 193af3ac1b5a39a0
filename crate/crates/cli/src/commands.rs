use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use log::info;
use sbcool::constants::{angular_to_hz, hz_to_angular, SPEED_OF_LIGHT};
use sbcool::io::{
    frequency_noise_from_length, frequency_noise_from_phase, length_noise_from_frequency,
    phase_noise_from_frequency, read_spectrum, write_atomic, write_json, write_spectrum,
    ExperimentConfig, FitReport, PeakRecord, Provenance,
};
use sbcool::physics::CavitySpec;
use sbcool::pipeline::{
    analyze_cooling, analyze_spectrum, gamma_opt_grid, input_power_grid, occupancy_from_area,
    predict as run_predict, synthesize_campaign, AnalysisOptions, PredictDrive, Sweep,
};

use crate::plot;
use crate::{
    Common, ConvertArgs, CoolingArgs, FitPeakArgs, NoiseUnit, PredictArgs, SweepVariable, SynthArgs,
};

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let config = ExperimentConfig::load(&common.config)?;
    let config = match common.detuning_hz {
        Some(d) => config.with_detuning_hz(d),
        None => config,
    };
    config.validate().context("configuration after overrides")?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spectrum".into())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut config = load_config(&args.common)?;
    let plan = config
        .campaign
        .as_ref()
        .ok_or_else(|| anyhow!("configuration has no `campaign` section"))?;
    let mode = plan.mode.clone();
    let grid = match &args.grid {
        Some(g) => {
            ensure!(g.len() == 3, "--grid takes LO,HI,N");
            let n = g[2];
            ensure!(
                n.fract() == 0.0 && n >= 2.0,
                "--grid point count must be an integer ≥ 2"
            );
            let points = if args.grid_as_power {
                (
                    None,
                    Some(input_power_grid(&config, &mode, g[0], g[1], n as usize)?),
                )
            } else {
                (
                    Some(gamma_opt_grid(&config, &mode, g[0], g[1], n as usize)?),
                    None,
                )
            };
            Some(points)
        }
        None => match (&args.gamma_opt_hz, &args.input_power_w) {
            (Some(g), _) => Some((Some(g.clone()), None)),
            (None, Some(p)) => Some((None, Some(p.clone()))),
            (None, None) => None,
        },
    };
    if let Some((gammas, powers)) = grid {
        let plan = config.campaign.as_mut().expect("checked above");
        plan.gamma_opt_hz = gammas;
        plan.input_power_w = powers;
    }

    let campaign = synthesize_campaign(&config, args.seed)?;
    create_dir(&args.out)?;
    for (spectrum, point) in campaign.spectra.iter().zip(&campaign.manifest.points) {
        write_spectrum(spectrum, &args.out.join(&point.file))?;
    }
    write_json(&campaign.manifest, &args.out.join("manifest.json"))?;
    info!(
        "wrote {} spectra to {}",
        campaign.spectra.len(),
        args.out.display()
    );
    Ok(())
}

fn resolve_mode(
    config: &ExperimentConfig,
    flag: Option<&str>,
    tagged: Option<&str>,
) -> Result<String> {
    if let Some(label) = flag {
        return Ok(config.mode_config(label)?.label.clone());
    }
    if let Some(label) = tagged.filter(|l| config.modes.iter().any(|m| m.label == *l)) {
        return Ok(label.to_string());
    }
    Ok(config
        .select_mode(None)
        .context("pick one with --mode")?
        .label
        .clone())
}

pub fn fit_peak(args: &FitPeakArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    if let Some(w) = &args.window_hz {
        ensure!(w.len() == 2, "--window-hz takes LO,HI");
    }
    let window_hz = args.window_hz.as_ref().map(|w| (w[0], w[1]));
    if let Some((lo, hi)) = window_hz {
        ensure!(lo < hi, "--window-hz needs LO < HI");
    }
    let options = AnalysisOptions {
        window_hz,
        skip_background: args.skip_background,
    };
    create_dir(&args.out)?;

    let mut first_error = None;
    for input in &args.inputs {
        if let Err(err) = fit_one(&config, args, &options, input) {
            let name = input.display().to_string();
            let err = if err.to_string().contains(&name) {
                err
            } else {
                err.context(name)
            };
            if args.inputs.len() > 1 {
                eprintln!("{}", crate::describe(&err));
            }
            first_error.get_or_insert(err);
        }
    }
    match first_error {
        None => Ok(()),
        Some(err) if args.inputs.len() == 1 => Err(err),
        Some(err) => Err(err.context("some spectra were not fitted")),
    }
}

fn fit_one(
    config: &ExperimentConfig,
    args: &FitPeakArgs,
    options: &AnalysisOptions,
    input: &Path,
) -> Result<()> {
    let spectrum = read_spectrum(input)?;
    let mode = resolve_mode(
        config,
        args.mode.as_deref(),
        spectrum.metadata.get("mode").map(String::as_str),
    )?;
    let analysis = analyze_spectrum(&spectrum, config, &mode, options)?;
    let seed = spectrum.metadata.get("seed").and_then(|s| s.parse().ok());
    let report = FitReport {
        peaks: vec![analysis.record.clone()],
        cooling: None,
        provenance: Provenance::new(vec![input.display().to_string()], seed),
    };
    let name = stem(input);
    let plot_path = args.out.join(format!("{name}.plot.dat"));
    write_atomic(
        &plot_path,
        plot::peak_data(&analysis, &config.detection_config()).as_bytes(),
    )?;
    if args.gnuplot {
        let script = plot::peak_script(&format!("{name}.plot.dat"), &name);
        write_atomic(&args.out.join(format!("{name}.gp")), script.as_bytes())?;
    }
    report.save(&args.out.join(format!("{name}.fit.json")))?;
    let r = &analysis.record;
    info!(
        "{}: Γ_eff/2π = {:.1} Hz, a_eff = {:.4e} ± {:.1e} Hz², {:?} selected",
        input.display(),
        angular_to_hz(r.gamma_eff.value),
        r.a_eff.value,
        r.a_eff.sigma,
        r.fit.selected
    );
    Ok(())
}

pub fn cooling_curve(args: &CoolingArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let mut records: Vec<PeakRecord> = Vec::new();
    let mut inputs = Vec::new();
    let mut seeds = Vec::new();
    for path in &args.reports {
        let report = FitReport::load(path)?;
        ensure!(
            !report.peaks.is_empty(),
            "{} holds no peak records",
            path.display()
        );
        seeds.push(report.provenance.seed);
        inputs.push(path.display().to_string());
        records.extend(report.peaks);
    }
    ensure!(
        records.len() >= 3,
        "the cooling curve needs at least 3 peaks, got {}",
        records.len()
    );
    let tagged = records[0].mode.clone();
    let mode = resolve_mode(&config, args.mode.as_deref(), Some(&tagged))?;
    let cooling = analyze_cooling(&records, &config, &mode)?;

    let g0_hz = angular_to_hz(cooling.curve.g0.value);
    for r in records.iter_mut().filter(|r| r.n_eff.is_none()) {
        let (n, t) = occupancy_from_area(r.a_eff, r.omega_eff.value, g0_hz);
        r.n_eff = Some(n);
        r.t_eff_k = Some(t);
    }
    let seed = match seeds.first() {
        Some(&s) if seeds.iter().all(|x| *x == s) => s,
        _ => None,
    };

    create_dir(&args.out)?;
    let plot_data = plot::cooling_data(&records, &cooling.curve);
    write_atomic(&args.out.join("cooling.plot.dat"), plot_data.as_bytes())?;
    if args.gnuplot {
        write_atomic(
            &args.out.join("cooling.gp"),
            plot::cooling_script("cooling.plot.dat").as_bytes(),
        )?;
    }
    let c = &cooling.curve;
    info!(
        "g0/2π = {:.3} ± {:.3} Hz, n_min = {:.1} ± {:.1}, Γ_min/2π = {:.1} ± {:.1} Hz, T_eff = {:.3e} K, Q_eff = {:.1}",
        angular_to_hz(c.g0.value),
        angular_to_hz(c.g0.sigma),
        c.n_min.value,
        c.n_min.sigma,
        angular_to_hz(c.gamma_min.value),
        angular_to_hz(c.gamma_min.sigma),
        cooling.t_eff_min_k.value,
        cooling.q_eff_min.value
    );
    let report = FitReport {
        peaks: records,
        cooling: Some(cooling),
        provenance: Provenance::new(inputs, seed),
    };
    report.save(&args.out.join("cooling.json"))?;
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let config = load_config(&args.common)?;
    let mode = resolve_mode(&config, args.mode.as_deref(), None)?;
    let (from, to, n) = (args.from, args.to, args.n);
    let sweep = match args.sweep {
        SweepVariable::DetuningHz => Sweep::DetuningHz { from, to, n },
        SweepVariable::QFactor => Sweep::QFactor { from, to, n },
        SweepVariable::InputPowerW => Sweep::InputPowerW { from, to, n },
    };
    let drive = match (args.gamma_opt_hz, args.input_power_w) {
        (Some(g), _) => PredictDrive::GammaOptHz(g),
        (None, Some(p)) => PredictDrive::InputPowerW(p),
        (None, None) if matches!(args.sweep, SweepVariable::InputPowerW) => {
            PredictDrive::InputPowerW(from)
        }
        (None, None) => bail!("hold the drive fixed with --gamma-opt-hz or --input-power-w"),
    };
    let table = run_predict(&config, &mode, &sweep, drive)?;
    let mut text = String::new();
    for flag in &table.flags {
        text.push_str(&format!("# {flag}\n"));
    }
    text.push_str(&table.to_tsv());
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn convert_cavity(args: &ConvertArgs) -> Result<CavitySpec> {
    let from_config = match &args.config {
        Some(path) => Some(ExperimentConfig::load(path)?),
        None => None,
    };
    let length = args
        .cavity_length_m
        .or(from_config.as_ref().and_then(|c| c.cavity.cavity_length_m))
        .ok_or_else(|| {
            anyhow!("length noise needs --cavity-length-m or a configuration with cavity_length_m")
        })?;
    let nu = args
        .laser_wavelength_m
        .map(|l| SPEED_OF_LIGHT / l)
        .or(from_config
            .as_ref()
            .and_then(ExperimentConfig::laser_frequency_hz))
        .ok_or_else(|| {
            anyhow!("length noise needs --laser-wavelength-m or a configured laser frequency")
        })?;
    // κ and Δ do not enter the length conversion
    Ok(CavitySpec::new(1.0, -1.0)?
        .with_length(length)?
        .with_laser_frequency(nu)?)
}

pub fn convert(args: &ConvertArgs) -> Result<()> {
    let needs_frequency = args.from == NoiseUnit::SPhiPhi || args.to == NoiseUnit::SPhiPhi;
    let needs_cavity = args.from == NoiseUnit::SLl || args.to == NoiseUnit::SLl;
    let omega = match (needs_frequency && args.from != args.to, args.frequency_hz) {
        (true, Some(f)) if f > 0.0 => Some(hz_to_angular(f)),
        (true, _) => bail!("phase noise conversion needs --frequency-hz > 0"),
        (false, _) => None,
    };
    let cavity = if needs_cavity && args.from != args.to {
        Some(convert_cavity(args)?)
    } else {
        None
    };

    let mut out = String::new();
    for &v in &args.values {
        ensure!(
            v.is_finite() && v >= 0.0,
            "spectral densities must be finite and non-negative, got {v}"
        );
        let s_nu = match args.from {
            NoiseUnit::SNuNu => v,
            NoiseUnit::SPhiPhi if args.to == NoiseUnit::SPhiPhi => v,
            NoiseUnit::SPhiPhi => frequency_noise_from_phase(v, omega.expect("checked")),
            NoiseUnit::SLl if args.to == NoiseUnit::SLl => v,
            NoiseUnit::SLl => frequency_noise_from_length(v, cavity.as_ref().expect("checked"))?,
        };
        let result = match (args.from == args.to, args.to) {
            (true, _) => v,
            (false, NoiseUnit::SNuNu) => s_nu,
            (false, NoiseUnit::SPhiPhi) => {
                phase_noise_from_frequency(s_nu, omega.expect("checked"))
            }
            (false, NoiseUnit::SLl) => {
                length_noise_from_frequency(s_nu, cavity.as_ref().expect("checked"))?
            }
        };
        out.push_str(&format!("{result:.10e}\n"));
    }
    print!("{out}");
    Ok(())
}
