use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, write_atomic, IoError, Result};
use crate::spectrum::{FrequencyGrid, Spectrum, Units};

const COLUMNS: &str = "frequency_hz,psd";
const KEY_UNITS: &str = "units";
const KEY_AVERAGES: &str = "n_averages";
const KEY_START: &str = "f_start";
const KEY_STEP: &str = "f_step";
/// Allowed drift of a listed frequency from the header grid, in steps.
const GRID_TOLERANCE: f64 = 1e-6;

/// Renders a spectrum as `#` key=value header lines followed by
/// `frequency_hz,psd` rows with 17 significant digits.
pub fn format_spectrum(spectrum: &Spectrum) -> String {
    let mut out = String::with_capacity(48 * (spectrum.len() + 8));
    let _ = writeln!(out, "# {KEY_UNITS}={}", spectrum.units().tag());
    let _ = writeln!(out, "# {KEY_AVERAGES}={}", spectrum.n_averages());
    let _ = writeln!(out, "# {KEY_START}={:.16e}", spectrum.f_start());
    let _ = writeln!(out, "# {KEY_STEP}={:.16e}", spectrum.f_step());
    for (k, v) in &spectrum.metadata {
        let _ = writeln!(out, "# {k}={}", v.replace('\n', " "));
    }
    out.push_str(COLUMNS);
    out.push('\n');
    for (f, v) in spectrum.frequencies().zip(spectrum.values()) {
        let _ = writeln!(out, "{f:.16e},{v:.16e}");
    }
    out
}

pub fn write_spectrum(spectrum: &Spectrum, path: &Path) -> Result<()> {
    spectrum.validate()?;
    write_atomic(path, format_spectrum(spectrum).as_bytes())
}

pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let mut spectrum = parse_spectrum(&read_text(path)?)?;
    spectrum
        .metadata
        .entry("source".into())
        .or_insert_with(|| path.display().to_string());
    Ok(spectrum)
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| IoError::Parse {
        line,
        reason: format!("`{}` is not a number", field.trim()),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IoError::NonFinite { line })
    }
}

fn split_row(row: &str) -> Vec<&str> {
    if row.contains(',') {
        row.split(',').collect()
    } else {
        row.split_whitespace().collect()
    }
}

/// Parses the spectrum file format. A file without any `#` header is read
/// as a legacy analyzer export: units raw, one average, grid from the rows.
pub fn parse_spectrum(text: &str) -> Result<Spectrum> {
    let mut header = std::collections::BTreeMap::new();
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            saw_header = true;
            let (k, v) = rest.split_once('=').ok_or_else(|| IoError::BadHeader {
                line,
                reason: format!("expected key=value, got `{}`", rest.trim()),
            })?;
            header.insert(k.trim().to_string(), v.trim().to_string());
            continue;
        }
        let fields = split_row(trimmed);
        if rows.is_empty()
            && fields
                .first()
                .is_some_and(|f| f.trim().parse::<f64>().is_err())
        {
            // column names
            continue;
        }
        if fields.len() != 2 {
            return Err(IoError::Parse {
                line,
                reason: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        rows.push((
            line,
            parse_number(fields[0], line)?,
            parse_number(fields[1], line)?,
        ));
    }
    if rows.len() < 2 {
        return Err(IoError::Parse {
            line: text.lines().count(),
            reason: "fewer than two data rows".into(),
        });
    }

    let legacy = !saw_header;
    let (units, n_averages) = if legacy {
        log::warn!("spectrum file has no header; reading as legacy raw export with n_averages=1");
        (Units::RawVolts2, 1)
    } else {
        let tag = header
            .get(KEY_UNITS)
            .ok_or(IoError::MissingHeader(KEY_UNITS))?;
        let units = Units::from_tag(tag).ok_or_else(|| IoError::BadHeader {
            line: 0,
            reason: format!("unknown units `{tag}`"),
        })?;
        let m = header
            .get(KEY_AVERAGES)
            .ok_or(IoError::MissingHeader(KEY_AVERAGES))?;
        let m: u32 = m
            .parse()
            .ok()
            .filter(|&m| m > 0)
            .ok_or_else(|| IoError::BadHeader {
                line: 0,
                reason: format!("n_averages `{m}` is not a positive integer"),
            })?;
        (units, m)
    };

    let header_number = |key: &str| -> Result<Option<f64>> {
        header
            .get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| IoError::BadHeader {
                    line: 0,
                    reason: format!("{key} `{v}` is not a number"),
                })
            })
            .transpose()
    };
    let f_start = header_number(KEY_START)?.unwrap_or(rows[0].1);
    let f_step = header_number(KEY_STEP)?.unwrap_or(rows[1].1 - rows[0].1);
    if !(f_step > 0.0) {
        return Err(IoError::NonUniformGrid {
            line: rows[1].0,
            expected: f_start + f_step.abs(),
            found: rows[1].1,
        });
    }
    for (i, &(line, f, _)) in rows.iter().enumerate() {
        let expected = f_start + i as f64 * f_step;
        if (f - expected).abs() > GRID_TOLERANCE * f_step {
            return Err(IoError::NonUniformGrid {
                line,
                expected,
                found: f,
            });
        }
    }

    let grid = FrequencyGrid::new(f_start, f_step, rows.len())?;
    let values = rows.iter().map(|r| r.2).collect();
    let mut extra = header;
    for key in [KEY_UNITS, KEY_AVERAGES, KEY_START, KEY_STEP] {
        extra.remove(key);
    }
    let mut spectrum = Spectrum::from_parts(grid, values, units, n_averages, extra)?;
    if legacy {
        spectrum
            .metadata
            .insert("legacy_format".into(), "true".into());
    }
    Ok(spectrum)
}
