//! Trajectory and matrix CSV files, and the JSON results document.
//!
//! Trajectory files carry a header `x1,..,xn,u1,..,up`. Row `t` holds `x(t)`
//! and `u(t)`; the final row leaves its input fields empty. Numbers are written
//! in shortest round-trip form, so export followed by ingest is exact.

use std::fs::File;
use std::path::Path;

use mtsysid::{MatrixBundle, Trajectory};
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};
use crate::record::ResultsRecord;

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_failure(path: &Path, err: csv::Error) -> CliError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            CliError::parse(path, line, format!("row has {len} fields, header has {expected_len}"))
        }
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

fn parse_field(path: &Path, line: u64, column: &str, text: &str) -> CliResult<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| CliError::parse(path, line, format!("field {column}: `{text}` is not a number")))
}

/// Reads a trajectory CSV.
pub fn ingest_trajectory(path: &Path) -> CliResult<Trajectory> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_failure(path, e))?.clone();
    let mut n = 0;
    let mut p = 0;
    for (k, name) in headers.iter().enumerate() {
        let name = name.trim();
        let (prefix, index) = name.split_at(1.min(name.len()));
        let ok = index.parse::<usize>().ok();
        match (prefix, ok) {
            ("x", Some(i)) if p == 0 && i == n + 1 => n += 1,
            ("u", Some(i)) if n > 0 && i == p + 1 => p += 1,
            _ => {
                return Err(CliError::parse(
                    path,
                    1,
                    format!("header field {} is `{name}`; expected x1..xn followed by u1..up", k + 1),
                ))
            }
        }
    }
    if n == 0 {
        return Err(CliError::parse(path, 1, "header names no state columns"));
    }

    let mut states: Vec<f64> = Vec::new();
    let mut inputs: Vec<f64> = Vec::new();
    let mut open_row: Option<u64> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = record.position().map(|pos| pos.line()).unwrap_or(0);
        if let Some(prev) = open_row {
            return Err(CliError::parse(
                path,
                prev,
                "only the final row may leave its input fields empty",
            ));
        }
        for k in 0..n {
            states.push(parse_field(path, line, &headers[k], &record[k])?);
        }
        let blanks = (n..n + p).filter(|&k| record[k].trim().is_empty()).count();
        if p > 0 && blanks == p {
            open_row = Some(line);
        } else if blanks > 0 {
            return Err(CliError::parse(path, line, "input fields are partially empty"));
        } else {
            for k in n..n + p {
                inputs.push(parse_field(path, line, &headers[k], &record[k])?);
            }
        }
    }
    let rows = states.len() / n;
    if rows < 2 {
        return Err(CliError::parse(path, rows as u64 + 1, format!("need at least 2 state rows, found {rows}")));
    }
    if p > 0 && open_row.is_none() {
        return Err(CliError::parse(
            path,
            rows as u64 + 1,
            "final row must leave its input fields empty",
        ));
    }
    let pairs = rows - 1;
    let states = DMatrix::from_column_slice(n, rows, &states);
    let inputs = if p == 0 {
        DMatrix::zeros(0, pairs)
    } else {
        DMatrix::from_column_slice(p, pairs, &inputs)
    };
    Ok(Trajectory::new(states, inputs)?)
}

/// Writes a trajectory CSV.
pub fn export_trajectory(trajectory: &Trajectory, path: &Path) -> CliResult<()> {
    let (n, p, pairs) = (trajectory.state_dim(), trajectory.input_dim(), trajectory.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_failure(path, e))?;
    let header: Vec<String> = (1..=n).map(|k| format!("x{k}")).chain((1..=p).map(|k| format!("u{k}"))).collect();
    w.write_record(&header).map_err(|e| csv_failure(path, e))?;
    for t in 0..=pairs {
        let mut row: Vec<String> = trajectory.states().column(t).iter().map(|v| v.to_string()).collect();
        if t < pairs {
            row.extend(trajectory.inputs().column(t).iter().map(|v| v.to_string()));
        } else {
            row.extend(std::iter::repeat_n(String::new(), p));
        }
        w.write_record(&row).map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a headerless numeric matrix, one CSV row per matrix row.
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_failure(path, e))?;
        let line = record.position().map(|pos| pos.line()).unwrap_or(0);
        // A lone empty field marks a zero-column row (e.g. B with p = 0).
        let fields: Vec<&str> = if record.len() == 1 && record[0].trim().is_empty() {
            Vec::new()
        } else {
            record.iter().collect()
        };
        if *cols.get_or_insert(fields.len()) != fields.len() {
            return Err(CliError::parse(path, line, "ragged matrix row"));
        }
        rows += 1;
        for (k, f) in fields.iter().enumerate() {
            values.push(parse_field(path, line, &format!("column {}", k + 1), f)?);
        }
    }
    let cols = cols.unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix(matrix: &DMatrix<f64>, path: &Path) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_failure(path, e))?;
    for r in 0..matrix.nrows() {
        let row: Vec<String> = if matrix.ncols() == 0 {
            vec![String::new()]
        } else {
            matrix.row(r).iter().map(|v| v.to_string()).collect()
        };
        w.write_record(&row).map_err(|e| csv_failure(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_bundle(paths: &[impl AsRef<Path>]) -> CliResult<MatrixBundle> {
    let mats = paths.iter().map(|p| read_matrix(p.as_ref())).collect::<CliResult<Vec<_>>>()?;
    Ok(MatrixBundle::new(mats)?)
}

pub fn export_results(record: &ResultsRecord, path: &Path) -> CliResult<()> {
    let text = record.to_json();
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_results(path: &Path) -> CliResult<ResultsRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ResultsRecord::from_json(&text).map_err(|e| CliError::parse(path, e.line() as u64, e.to_string()))
}
