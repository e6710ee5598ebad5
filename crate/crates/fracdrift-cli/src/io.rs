//! CSV input/output: comma separators, `.` decimals, 17 significant digits,
//! header row, LF line endings.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{CliError, CliResult};

/// 17 significant digits, locale-independent; round-trips any f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a table of float columns under the given header names.
pub fn write_csv(path: &Path, header: &[String], columns: &[Vec<f64>]) -> CliResult<()> {
    if columns.is_empty() || header.len() != columns.len() {
        return Err(CliError::Io("header and column counts differ".into()));
    }
    let rows = columns[0].len();
    if columns.iter().any(|c| c.len() != rows) {
        return Err(CliError::Io("ragged columns".into()));
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..rows {
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format_float(col[r]));
        }
        out.push('\n');
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a CSV of float columns; returns the header names and the columns.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Io(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(CliError::Io(format!(
                "{}:{}: expected {} fields, found {}",
                path.display(),
                ln + 2,
                header.len(),
                fields.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(&fields) {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Io(format!("{}:{}: bad number {field:?}", path.display(), ln + 2))
            })?;
            col.push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(CliError::Io(format!("{}: no data rows", path.display())));
    }
    Ok((header, columns))
}

/// Read a `(t, value)` series; extra value columns are returned as extra
/// series sharing the time column.
pub fn read_series(path: &Path) -> CliResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let (_, mut columns) = read_csv(path)?;
    if columns.len() < 2 {
        return Err(CliError::Io(format!(
            "{}: need a time column and at least one value column",
            path.display()
        )));
    }
    let times = columns.remove(0);
    Ok((times, columns))
}
