use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::constants::{angular_to_hz, hz_to_angular};
use crate::io::ExperimentConfig;
use crate::physics::{min_occupancy, optical_damping, DriveField, LaserNoise, MinOccupancy};
use crate::spectrum::{
    add_calibration_tone, evaluate_background, output_psd, synthesize_with_rng, BackgroundModel,
    CalibrationTone, FrequencyGrid, ModelInputs, ModelTruth, Spectrum, Units,
};

/// Truth behind one synthesized spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPoint {
    pub file: String,
    pub gamma_opt_hz: f64,
    pub input_power_w: Option<f64>,
    pub truth: ModelTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub mode: String,
    pub seed: u64,
    pub n_averages: u32,
    pub detuning_hz: f64,
    pub g0_hz: f64,
    pub noise: LaserNoise,
    pub theta: Option<f64>,
    /// Expected b₁, Hz²·rad/s.
    pub b1: f64,
    /// Expected b₂ for the excess noise, Hz²·s/rad; zero without noise.
    pub b2: f64,
    pub optimum: Option<MinOccupancy>,
    pub background: BackgroundModel,
    pub calibration_tone: Option<CalibrationTone>,
    pub raw_scale: f64,
    pub points: Vec<ManifestPoint>,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub spectra: Vec<Spectrum>,
    pub manifest: CampaignManifest,
}

/// `n` geometrically spaced optical widths Γ_opt/2π between `lo` and `hi`
/// times the optimum width of the campaign mode.
pub fn gamma_opt_grid(
    config: &ExperimentConfig,
    mode: &str,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if n < 2 || !(lo > 0.0 && hi > lo) {
        return Err(PipelineError::Invalid(
            "grid needs n ≥ 2 and 0 < lo < hi".into(),
        ));
    }
    let m = config.mode(mode)?;
    let optimum = min_occupancy(
        &m,
        &config.cavity_spec()?,
        config.g0(mode)?,
        &config.laser_noise(mode)?,
    )?;
    let g = angular_to_hz(optimum.gamma_min);
    let ratio = (hi / lo).ln();
    Ok((0..n)
        .map(|k| g * lo * (ratio * k as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Input powers, W, giving the optical widths of [`gamma_opt_grid`].
pub fn input_power_grid(
    config: &ExperimentConfig,
    mode: &str,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let gammas = gamma_opt_grid(config, mode, lo, hi, n)?;
    let nu = config
        .laser_frequency_hz()
        .ok_or(crate::io::IoError::MissingField("laser_frequency_hz"))?;
    let one_watt = DriveField::from_power(config.g0(mode)?, 1.0, nu)?;
    let per_watt = optical_damping(&config.cavity_spec()?, &config.mode(mode)?, &one_watt)?;
    if !(per_watt > 0.0) {
        return Err(PipelineError::Invalid(format!(
            "detuning gives optical damping {per_watt:.3e} rad/s per W; no cooling"
        )));
    }
    Ok(gammas
        .into_iter()
        .map(|g| hz_to_angular(g) / per_watt)
        .collect())
}

/// Synthesizes one periodogram per drive point of the configured campaign:
/// forward model plus background, χ² noise for M averages, detector scale
/// and calibration tone. Spectra are in Hz²/Hz when the detector scale is
/// one and raw V²/Hz otherwise. Deterministic in `seed`.
pub fn synthesize_campaign(config: &ExperimentConfig, seed: u64) -> Result<Campaign> {
    let plan = config
        .campaign
        .as_ref()
        .ok_or_else(|| PipelineError::Invalid("configuration has no campaign".into()))?;
    let mode = config.mode(&plan.mode)?;
    let cavity = config.cavity_spec()?;
    let g0 = config.g0(&plan.mode)?;
    let noise = config.laser_noise(&plan.mode)?;
    let detection = config.detection_config();
    let background = plan.background.model()?;
    let grid = FrequencyGrid::spanning(plan.f_start_hz, plan.f_stop_hz, plan.f_step_hz)?;
    // flat level enters as the model floor
    let shape = BackgroundModel {
        tail_offset: 0.0,
        ..background
    };
    let bg = evaluate_background(&shape, &grid, Units::Hz2PerHz)?;

    let drives: Vec<(DriveField, Option<f64>)> = match (&plan.gamma_opt_hz, &plan.input_power_w) {
        (Some(gammas), _) => gammas
            .iter()
            .map(|&g| Ok((DriveField::from_damping(g0, hz_to_angular(g))?, None)))
            .collect::<Result<_>>()?,
        (None, Some(powers)) => {
            let nu = config
                .laser_frequency_hz()
                .ok_or(crate::io::IoError::MissingField("laser_frequency_hz"))?;
            powers
                .iter()
                .map(|&p| Ok((DriveField::from_power(g0, p, nu)?, Some(p))))
                .collect::<Result<_>>()?
        }
        (None, None) => return Err(PipelineError::Invalid("campaign has no drive grid".into())),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectra = Vec::with_capacity(drives.len());
    let mut points = Vec::with_capacity(drives.len());
    for (index, (drive, power)) in drives.into_iter().enumerate() {
        let inputs = ModelInputs {
            mode: mode.clone(),
            cavity,
            drive,
            noise,
            detection,
            floor: background.tail_offset,
        };
        let at_point = |source| PipelineError::Point {
            index,
            drive: format!("{:?}", drive.drive),
            source,
        };
        let truth = inputs.truth().map_err(at_point)?;
        let model = output_psd(&grid, &inputs)
            .map_err(at_point)?
            .assume_units(Units::Hz2PerHz)
            .add(&bg)?;
        let noisy = synthesize_with_rng(&model, plan.n_averages, &mut rng)?;
        // a unit detector scale leaves the spectrum calibrated
        let detected = if plan.raw_scale == 1.0 {
            noisy
        } else {
            noisy.scaled(plan.raw_scale, Units::RawVolts2)?
        };
        let mut out = match &config.calibration_tone {
            Some(tone) => add_calibration_tone(&detected, tone, plan.raw_scale)?,
            None => detected,
        };
        let file = format!("point_{index:02}.csv");
        out.metadata.clear();
        out.metadata.insert("mode".into(), plan.mode.clone());
        out.metadata.insert("seed".into(), seed.to_string());
        out.metadata.insert("point".into(), index.to_string());
        let gamma_opt_hz = angular_to_hz(truth.budget.gamma_opt);
        out.metadata
            .insert("gamma_opt_hz".into(), format!("{gamma_opt_hz:.16e}"));
        spectra.push(out);
        points.push(ManifestPoint {
            file,
            gamma_opt_hz,
            input_power_w: power,
            truth,
        });
    }

    let n_th = crate::physics::thermal_occupation(&mode)?;
    let g_hz2 = angular_to_hz(g0).powi(2);
    let theta = points.first().and_then(|p| p.truth.theta);
    let optimum = min_occupancy(&mode, &cavity, g0, &noise).ok();
    let b2 = match optimum {
        Some(o) => 2.0 * g_hz2 * mode.gamma_m * n_th / (o.gamma_min * o.gamma_min),
        None => 0.0,
    };
    Ok(Campaign {
        spectra,
        manifest: CampaignManifest {
            mode: plan.mode.clone(),
            seed,
            n_averages: plan.n_averages,
            detuning_hz: config.cavity.detuning_hz,
            g0_hz: angular_to_hz(g0),
            noise,
            theta,
            b1: 2.0 * g_hz2 * mode.gamma_m * n_th,
            b2,
            optimum,
            background,
            calibration_tone: config.calibration_tone,
            raw_scale: plan.raw_scale,
            points,
        },
    })
}
