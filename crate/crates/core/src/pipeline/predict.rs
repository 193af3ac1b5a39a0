use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::constants::{angular_to_hz, hz_to_angular};
use crate::io::ExperimentConfig;
use crate::physics::{
    amplitude_factor, backaction_occupancy, effective_occupancy, min_occupancy, sideband_angle,
    DriveField,
};

/// Closed-form sweep variable; detuning is linear, the others geometric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    DetuningHz { from: f64, to: f64, n: usize },
    QFactor { from: f64, to: f64, n: usize },
    InputPowerW { from: f64, to: f64, n: usize },
}

impl Sweep {
    fn name(&self) -> &'static str {
        match self {
            Sweep::DetuningHz { .. } => "detuning_hz",
            Sweep::QFactor { .. } => "q_factor",
            Sweep::InputPowerW { .. } => "input_power_w",
        }
    }

    fn values(&self) -> Result<Vec<f64>> {
        let (from, to, n, geometric) = match *self {
            Sweep::DetuningHz { from, to, n } => (from, to, n, false),
            Sweep::QFactor { from, to, n } => (from, to, n, true),
            Sweep::InputPowerW { from, to, n } => (from, to, n, true),
        };
        if n == 0
            || !from.is_finite()
            || !to.is_finite()
            || (geometric && !(from > 0.0 && to > 0.0))
        {
            return Err(PipelineError::Invalid(format!("bad {} sweep", self.name())));
        }
        if n == 1 {
            return Ok(vec![from]);
        }
        let t = |k: usize| k as f64 / (n - 1) as f64;
        Ok((0..n)
            .map(|k| {
                if geometric {
                    from * (to / from).powf(t(k))
                } else {
                    from + (to - from) * t(k)
                }
            })
            .collect())
    }
}

/// How the cooling beam is set while another variable is swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictDrive {
    /// Fixed optical damping Γ_opt/2π.
    GammaOptHz(f64),
    InputPowerW(f64),
}

/// One sweep point. Fields that cannot be evaluated there are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRow {
    pub x: f64,
    pub gamma_opt_hz: Option<f64>,
    pub n_ba: Option<f64>,
    pub n_exc: Option<f64>,
    pub n_eff: Option<f64>,
    pub n_min: Option<f64>,
    pub gamma_min_hz: Option<f64>,
    pub theta: Option<f64>,
    pub amplitude_factor: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictTable {
    pub variable: String,
    pub mode: String,
    pub rows: Vec<PredictRow>,
    /// Monotonicity of n_min and Γ_min along the sweep.
    pub flags: Vec<String>,
}

impl PredictTable {
    pub const COLUMNS: [&'static str; 9] = [
        "gamma_opt_hz",
        "n_ba",
        "n_exc",
        "n_eff",
        "n_min",
        "gamma_min_hz",
        "theta",
        "amplitude_factor",
        "note",
    ];

    /// Tab-separated table, with empty cells where a value is undefined.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\t{}\n", self.variable, Self::COLUMNS.join("\t"));
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        for r in &self.rows {
            let cells = [
                r.gamma_opt_hz,
                r.n_ba,
                r.n_exc,
                r.n_eff,
                r.n_min,
                r.gamma_min_hz,
                r.theta,
                r.amplitude_factor,
            ]
            .map(cell)
            .join("\t");
            out.push_str(&format!(
                "{:.10e}\t{cells}\t{}\n",
                r.x,
                r.note.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

fn trend(values: &[f64]) -> &'static str {
    if values.len() < 2 {
        return "constant";
    }
    let up = values.windows(2).all(|w| w[1] >= w[0]);
    let down = values.windows(2).all(|w| w[1] <= w[0]);
    match (up, down) {
        (true, true) => "constant",
        (true, false) => "increasing",
        (false, true) => "decreasing",
        _ => "non-monotonic",
    }
}

/// Evaluates the occupancy budget and optimum along `sweep` for the named
/// mode. Unstable or undefined points are marked, not fatal.
pub fn predict(
    config: &ExperimentConfig,
    mode_label: &str,
    sweep: &Sweep,
    drive: PredictDrive,
) -> Result<PredictTable> {
    let base_mode = config.mode(mode_label)?;
    let base_cavity = config.cavity_spec()?;
    let g0 = config.g0(mode_label)?;
    let noise = config.laser_noise(mode_label)?;
    let laser = config.laser_frequency_hz();

    let mut rows = Vec::new();
    for x in sweep.values()? {
        let cavity = match sweep {
            Sweep::DetuningHz { .. } => base_cavity.detuned(hz_to_angular(x)),
            _ => base_cavity,
        };
        let mode = match sweep {
            Sweep::QFactor { .. } => base_mode.with_q(x)?,
            _ => base_mode.clone(),
        };
        let power_field = |p: f64| -> Result<DriveField> {
            let nu = laser.ok_or(crate::io::IoError::MissingField("laser_frequency_hz"))?;
            Ok(DriveField::from_power(g0, p, nu)?)
        };
        let field = match (sweep, drive) {
            (Sweep::InputPowerW { .. }, _) => power_field(x)?,
            (_, PredictDrive::InputPowerW(p)) => power_field(p)?,
            (_, PredictDrive::GammaOptHz(g)) => DriveField::from_damping(g0, hz_to_angular(g))?,
        };

        let mut notes = Vec::new();
        let theta = sideband_angle(&cavity, mode.omega_m)
            .map_err(|e| notes.push(e.to_string()))
            .ok();
        let a = amplitude_factor(&cavity, mode.omega_m)
            .map_err(|e| notes.push(e.to_string()))
            .ok();
        let n_ba = backaction_occupancy(&cavity, mode.omega_m)
            .map_err(|e| notes.push(e.to_string()))
            .ok();
        let budget = effective_occupancy(&mode, &cavity, &field, &noise)
            .map_err(|e| notes.push(e.to_string()))
            .ok();
        let optimum = min_occupancy(&mode, &cavity, g0, &noise).ok();
        notes.dedup();
        rows.push(PredictRow {
            x,
            gamma_opt_hz: budget.map(|b| angular_to_hz(b.gamma_opt)),
            n_ba,
            n_exc: budget.map(|b| b.n_exc),
            n_eff: budget.map(|b| b.n_eff),
            n_min: optimum.map(|o| o.n_min),
            gamma_min_hz: optimum.map(|o| angular_to_hz(o.gamma_min)),
            theta,
            amplitude_factor: a,
            note: (!notes.is_empty()).then(|| notes.join("; ")),
        });
    }

    let column =
        |f: fn(&PredictRow) -> Option<f64>| rows.iter().filter_map(f).collect::<Vec<f64>>();
    let flags = vec![
        format!("n_min {}", trend(&column(|r| r.n_min))),
        format!("gamma_min_hz {}", trend(&column(|r| r.gamma_min_hz))),
    ];
    Ok(PredictTable {
        variable: sweep.name().to_string(),
        mode: mode_label.to_string(),
        rows,
        flags,
    })
}
