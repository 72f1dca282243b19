//! CSV readers and writers.
//!
//! Spectrum data: header `rf_frequency_hz,molecule_count,count_uncertainty`
//! with the third column optional; UTF-8, `.` decimal separator, `#`
//! starts a comment line. Binding-energy points:
//! `b_field_gauss,binding_energy_khz,sigma_khz`. Floats are written with
//! the shortest representation that round-trips exactly.

use std::io::Write;
use std::path::Path;

use feshrf_core::constants::PLANCK_H;
use feshrf_core::fit::FieldPoint;
use feshrf_core::spectrum::{Spectrum, SpectrumPoint};
use feshrf_core::units::{to_si, Unit};

use crate::AppError;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, AppError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::input(format!("cannot open {}: {e}", path.display())))
}

fn parse_field(raw: &str, line: u64, column: &str, path: &Path) -> Result<f64, AppError> {
    raw.parse::<f64>().map_err(|_| {
        AppError::input(format!(
            "{}: line {line}: cannot parse {column} value {raw:?}",
            path.display()
        ))
    })
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Read a measured association spectrum.
pub fn read_spectrum(path: &Path) -> Result<Spectrum, AppError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let has_uncertainty = match cols.as_slice() {
        ["rf_frequency_hz", "molecule_count"] => false,
        ["rf_frequency_hz", "molecule_count", "count_uncertainty"] => true,
        _ => {
            return Err(AppError::input(format!(
                "{}: line 1: expected header rf_frequency_hz,molecule_count[,count_uncertainty], got {:?}",
                path.display(),
                cols.join(",")
            )))
        }
    };

    let mut points = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != headers.len() {
            return Err(AppError::input(format!(
                "{}: line {line}: expected {} columns, got {}",
                path.display(),
                headers.len(),
                record.len()
            )));
        }
        let frequency = parse_field(&record[0], line, "rf_frequency_hz", path)?;
        let molecule_number = parse_field(&record[1], line, "molecule_count", path)?;
        let uncertainty = if has_uncertainty {
            let s = parse_field(&record[2], line, "count_uncertainty", path)?;
            if !(s > 0.0) {
                return Err(AppError::input(format!(
                    "{}: line {line}: count_uncertainty must be positive",
                    path.display()
                )));
            }
            Some(s)
        } else {
            None
        };
        points.push(SpectrumPoint {
            frequency,
            molecule_number,
            uncertainty,
        });
    }
    if points.is_empty() {
        return Err(AppError::input(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Spectrum::new(points)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))
}

/// Write a model spectrum as `rf_frequency_hz,molecule_number`.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<(), AppError> {
    let mut out = std::fs::File::create(path)
        .map_err(|e| AppError::input(format!("cannot create {}: {e}", path.display())))?;
    let mut buf = String::from("rf_frequency_hz,molecule_number\n");
    for p in spectrum.points() {
        buf.push_str(&format!("{},{}\n", p.frequency, p.molecule_number));
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| AppError::input(format!("cannot write {}: {e}", path.display())))
}

/// Read binding-energy-vs-field points, converting to SI.
pub fn read_field_points(path: &Path) -> Result<Vec<FieldPoint>, AppError> {
    let mut rdr = reader(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != ["b_field_gauss", "binding_energy_khz", "sigma_khz"] {
        return Err(AppError::input(format!(
            "{}: line 1: expected header b_field_gauss,binding_energy_khz,sigma_khz, got {:?}",
            path.display(),
            cols.join(",")
        )));
    }
    let mut points = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| AppError::input(format!("{}: {e}", path.display())))?;
        let line = record_line(&record);
        if record.len() != 3 {
            return Err(AppError::input(format!(
                "{}: line {line}: expected 3 columns, got {}",
                path.display(),
                record.len()
            )));
        }
        let b_gauss = parse_field(&record[0], line, "b_field_gauss", path)?;
        let e_khz = parse_field(&record[1], line, "binding_energy_khz", path)?;
        let s_khz = parse_field(&record[2], line, "sigma_khz", path)?;
        if !(e_khz > 0.0 && s_khz > 0.0) {
            return Err(AppError::input(format!(
                "{}: line {line}: binding energy and sigma must be positive",
                path.display()
            )));
        }
        points.push(FieldPoint {
            b: to_si(b_gauss, Unit::Gauss),
            e_b: to_si(e_khz, Unit::KiloHertz) * PLANCK_H,
            sigma: to_si(s_khz, Unit::KiloHertz) * PLANCK_H,
        });
    }
    Ok(points)
}

/// Write a binding-energy curve as `b_field_gauss,binding_energy_khz,chi`.
pub fn write_binding_curve(path: &Path, rows: &[(f64, f64, f64)]) -> Result<(), AppError> {
    let mut out = std::fs::File::create(path)
        .map_err(|e| AppError::input(format!("cannot create {}: {e}", path.display())))?;
    let mut buf = String::from("b_field_gauss,binding_energy_khz,chi\n");
    for (b, e, chi) in rows {
        buf.push_str(&format!("{b},{e},{chi}\n"));
    }
    out.write_all(buf.as_bytes())
        .map_err(|e| AppError::input(format!("cannot write {}: {e}", path.display())))
}
