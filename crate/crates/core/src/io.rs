//! CSV and JSON readers and writers.
//!
//! CSV here is deliberately minimal: comma-separated numeric cells, no
//! quoting, blank lines ignored. Floats are written as `{:.16e}` (17
//! significant digits), which round-trips every finite `f64` exactly, so
//! re-running a command on its own output reproduces it byte for byte.
//! Parse failures report `path:line`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Lossless textual form of a float: 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a rectangular numeric CSV file. Blank lines (and lines of pure
/// whitespace) are skipped; every remaining line must have the same
/// number of comma-separated numeric cells.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in trimmed.split(',') {
            let cell = cell.trim();
            let value: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, line, format!("not a number: {cell:?}")))?;
            row.push(value);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected {w} columns, found {}", row.len()),
                ));
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a point cloud: one point per row, one coordinate per column.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = read_numeric_csv(path)?;
    if rows.is_empty() {
        return Err(parse_error(path, 1, "no data rows"));
    }
    Ok(rows)
}

/// Splits rows into points of dimension `dim` plus optional masses: rows
/// of width `dim` get unit mass, rows of width `dim + 1` treat the last
/// column as the mass.
pub fn weighted_points(rows: Vec<Vec<f64>>, dim: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let Some(first) = rows.first() else {
        return Err(Error::domain("no data rows"));
    };
    let width = first.len();
    if width == dim {
        let masses = vec![1.0; rows.len()];
        Ok((rows, masses))
    } else if width == dim + 1 {
        let mut points = Vec::with_capacity(rows.len());
        let mut masses = Vec::with_capacity(rows.len());
        for mut row in rows {
            let mass = row.pop().expect("width >= 1");
            points.push(row);
            masses.push(mass);
        }
        Ok((points, masses))
    } else {
        Err(Error::domain(format!(
            "rows have {width} columns; expected {dim} (coordinates) or {} (coordinates + mass)",
            dim + 1
        )))
    }
}

/// Writes a numeric CSV file, optionally with a header line.
pub fn write_numeric_csv(path: &Path, header: Option<&str>, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    if let Some(header) = header {
        out.push_str(header);
        out.push('\n');
    }
    for row in rows {
        let mut first = true;
        for value in row {
            if !first {
                out.push(',');
            }
            out.push_str(&format_float(*value));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Writes `(weight, point)` pairs with the header
/// `weight,param_1,...,param_d`.
pub fn write_weighted_samples_csv(path: &Path, samples: &[(f64, Vec<f64>)]) -> Result<()> {
    let Some((_, first)) = samples.first() else {
        return Err(Error::domain("no weighted samples to write"));
    };
    let mut header = String::from("weight");
    for i in 1..=first.len() {
        header.push_str(&format!(",param_{i}"));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|(w, x)| {
            let mut row = Vec::with_capacity(x.len() + 1);
            row.push(*w);
            row.extend_from_slice(x);
            row
        })
        .collect();
    write_numeric_csv(path, Some(&header), &rows)
}

/// Serializes `value` as pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Reads a JSON document into `T`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}
