//! `sbcool`: synthesize, fit and interpret sideband-cooling spectra.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbcool::fit::FitError;
use sbcool::pipeline::PipelineError;

#[derive(Debug, Parser)]
#[command(name = "sbcool", version, about = "Sideband-cooling spectrum analysis")]
struct Cli {
    /// More diagnostics on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize one spectrum per drive point plus a truth manifest.
    Synth(SynthArgs),
    /// Fit the mechanical peak of one or more spectra.
    FitPeak(FitPeakArgs),
    /// Fit the cooling curve of a series of peak reports.
    CoolingCurve(CoolingArgs),
    /// Closed-form occupancy budget along a parameter sweep.
    Predict(PredictArgs),
    /// Convert a noise spectral density between units.
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration, JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the cooling-beam detuning Δ/2π, Hz.
    #[arg(long, allow_hyphen_values = true)]
    detuning_hz: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Random seed; equal seeds give byte-identical files.
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Drive points as optical widths Γ_opt/2π, Hz.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["input_power_w", "grid"])]
    gamma_opt_hz: Option<Vec<f64>>,
    /// Drive points as input powers, W.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
    input_power_w: Option<Vec<f64>>,
    /// Geometric grid LO,HI,N of Γ_opt in units of the optimum width Γ_min.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Express a --grid as input powers instead of optical widths.
    #[arg(long, requires = "grid")]
    grid_as_power: bool,
}

#[derive(Debug, Args)]
struct FitPeakArgs {
    #[command(flatten)]
    common: Common,
    /// Mode label; defaults to the file's `mode` tag or the only mode.
    #[arg(long)]
    mode: Option<String>,
    /// Lineshape fit window LO,HI, Hz; found automatically when absent.
    #[arg(long, value_delimiter = ',')]
    window_hz: Option<Vec<f64>>,
    /// Fit the calibrated spectrum without removing a background.
    #[arg(long)]
    skip_background: bool,
    /// Output directory for reports and plot data.
    #[arg(long)]
    out: PathBuf,
    /// Also write a gnuplot script per spectrum.
    #[arg(long)]
    gnuplot: bool,
    /// Spectrum files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct CoolingArgs {
    #[command(flatten)]
    common: Common,
    /// Mode label; defaults to the reports' mode or the only mode.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write a gnuplot script.
    #[arg(long)]
    gnuplot: bool,
    /// Peak reports written by `fit-peak`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepVariable {
    DetuningHz,
    QFactor,
    InputPowerW,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    /// Mode label; defaults to the only mode.
    #[arg(long)]
    mode: Option<String>,
    /// Swept quantity.
    #[arg(long, value_enum)]
    sweep: SweepVariable,
    /// First sweep value, in the unit of the swept quantity.
    #[arg(long, allow_hyphen_values = true)]
    from: f64,
    /// Last sweep value.
    #[arg(long, allow_hyphen_values = true)]
    to: f64,
    /// Number of rows, linear in detuning and geometric otherwise.
    #[arg(long, default_value_t = 11)]
    n: usize,
    /// Hold the optical width Γ_opt/2π fixed, Hz.
    #[arg(long, conflicts_with = "input_power_w")]
    gamma_opt_hz: Option<f64>,
    /// Hold the input power fixed, W.
    #[arg(long)]
    input_power_w: Option<f64>,
    /// Table destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum NoiseUnit {
    /// Frequency noise S_νν, Hz²/Hz.
    SNuNu,
    /// Phase noise S_φφ, rad²/Hz.
    SPhiPhi,
    /// Cavity length noise S_LL, m²/Hz.
    SLl,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    from: NoiseUnit,
    #[arg(long, value_enum)]
    to: NoiseUnit,
    /// Analysis frequency for phase noise, Hz.
    #[arg(long)]
    frequency_hz: Option<f64>,
    /// Cavity length, m; read from --config when absent.
    #[arg(long)]
    cavity_length_m: Option<f64>,
    /// Laser wavelength, m; read from --config when absent.
    #[arg(long)]
    laser_wavelength_m: Option<f64>,
    /// Configuration supplying cavity length and wavelength.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Values to convert.
    #[arg(required = true, allow_hyphen_values = true)]
    values: Vec<f64>,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_NO_PEAK: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    let no_peak = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<PipelineError>(),
            Some(PipelineError::Fit(FitError::NoPeak { .. }))
        ) || matches!(e.downcast_ref::<FitError>(), Some(FitError::NoPeak { .. }))
    });
    if no_peak {
        EXIT_NO_PEAK
    } else {
        EXIT_FAILURE
    }
}

/// The error chain on one line, skipping causes whose text the enclosing
/// message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut text = err.to_string();
    let mut last = text.clone();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !last.contains(&c) {
            text.push_str(": ");
            text.push_str(&c);
        }
        last = c;
    }
    text
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::FitPeak(a) => commands::fit_peak(&a),
        Command::CoolingCurve(a) => commands::cooling_curve(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Convert(a) => commands::convert(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
