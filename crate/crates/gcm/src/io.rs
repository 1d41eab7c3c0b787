//! Plain CSV readers/writers for panels and square matrices.
//!
//! Formatting always uses the scalar type's shortest round-trip `Display`
//! form with a `.` decimal point, so identical inputs produce byte-identical
//! files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::ReturnPanel;
use crate::Scalar;

/// Writes a square matrix with a header row of asset ids.
pub fn write_matrix_csv<T: Scalar>(path: &Path, ids: &[String], m: &DMatrix<T>) -> Result<()> {
    if ids.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: ids.len(),
        });
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", ids.join(","))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a square matrix written by [`write_matrix_csv`]; returns the header
/// ids and the matrix.
pub fn read_matrix_csv<T: Scalar>(path: &Path) -> Result<(Vec<String>, DMatrix<T>)> {
    let display = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: display.clone(),
        line: 1,
        msg: "empty file".into(),
    })??;
    let ids: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n = ids.len();
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(Error::Parse {
                path: display.clone(),
                line: lineno + 2,
                msg: format!("expected {n} fields, found {}", fields.len()),
            });
        }
        for f in fields {
            values.push(parse_scalar::<T>(f, &display, lineno + 2)?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse {
            path: display,
            line: rows + 1,
            msg: format!("expected {n} rows to match the header, found {rows}"),
        });
    }
    Ok((ids, DMatrix::from_row_slice(n, n, &values)))
}

/// Writes a panel as `asset_id,<timestamps...>` followed by one row per
/// asset.
pub fn write_panel_csv<T: Scalar>(path: &Path, panel: &ReturnPanel<T>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "asset_id,{}", panel.timestamps().join(","))?;
    for (i, id) in panel.asset_ids().iter().enumerate() {
        let row: Vec<String> = panel
            .values()
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect();
        writeln!(out, "{id},{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a panel written by [`write_panel_csv`].
pub fn read_panel_csv<T: Scalar>(path: &Path) -> Result<ReturnPanel<T>> {
    let display = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: display.clone(),
        line: 1,
        msg: "empty file".into(),
    })??;
    let mut header_fields = header.split(',');
    let first = header_fields.next().unwrap_or_default();
    if first.trim() != "asset_id" {
        return Err(Error::Parse {
            path: display,
            line: 1,
            msg: "panel header must start with 'asset_id'".into(),
        });
    }
    let timestamps: Vec<String> = header_fields.map(|s| s.trim().to_string()).collect();
    let t = timestamps.len();

    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default().trim().to_string();
        let row: Vec<&str> = fields.collect();
        if row.len() != t {
            return Err(Error::Parse {
                path: display.clone(),
                line: lineno + 2,
                msg: format!("expected {t} return fields, found {}", row.len()),
            });
        }
        for f in row {
            values.push(parse_scalar::<T>(f, &display, lineno + 2)?);
        }
        ids.push(id);
    }
    let n = ids.len();
    ReturnPanel::new(DMatrix::from_row_slice(n, t, &values), ids, timestamps)
}

fn parse_scalar<T: Scalar>(field: &str, path: &str, line: usize) -> Result<T> {
    field.trim().parse::<T>().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        msg: format!("cannot parse '{}' as a number", field.trim()),
    })
}
