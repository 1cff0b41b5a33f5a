//! File formats: code-matrix JSON, Q-matrix / label / dataset / prediction
//! CSV, and JSON reports. Labels are 1-based on disk and 0-based in memory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::base::Dataset;
use crate::decode::{predict, ClassPosterior};
use crate::discrepancy::ProbMatrix;
use crate::encoding::CodeMatrix;
use crate::{Error, Result};

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Numeric CSV records with their 1-based line numbers. A first line with any
/// non-numeric field is treated as a header and skipped.
fn read_numeric_csv(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(index + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => rows.push((line, values)),
            Err(_) if index == 0 => continue,
            Err(e) => return Err(parse_error(path, line, e.to_string())),
        }
    }
    Ok(rows)
}

pub fn read_code_matrix(path: &Path) -> Result<CodeMatrix> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Reads a Q-matrix CSV: one row per example, M decimals in `[0, 1]`.
pub fn read_q(path: &Path) -> Result<ProbMatrix> {
    let rows = read_numeric_csv(path)?;
    let Some((_, first)) = rows.first() else {
        return Err(parse_error(path, 1, "no probability rows"));
    };
    let m = first.len();
    let mut values = Vec::with_capacity(rows.len() * m);
    for (line, row) in &rows {
        if row.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: row.len() });
        }
        for (column, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ValueOutOfRange { path: path.to_path_buf(), line: *line, column: column + 1, value: v });
            }
        }
        values.extend_from_slice(row);
    }
    ProbMatrix::new(rows.len(), m, values)
}

pub fn write_q<W: Write>(out: W, q: &ProbMatrix) -> Result<()> {
    let mut out = BufWriter::new(out);
    let header: Vec<String> = (1..=q.classifiers()).map(|j| format!("q_{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..q.examples() {
        writeln!(out, "{}", join(q.row(i)))?;
    }
    out.flush()?;
    Ok(())
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn to_label(path: &Path, line: usize, v: f64, classes: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 {
        return Err(parse_error(path, line, format!("label {v} is not an integer in 1..={classes}")));
    }
    let label = v as usize;
    if label > classes {
        return Err(Error::InvalidLabel { label, classes });
    }
    Ok(label - 1)
}

/// Reads a single-column label CSV with values in `1..=classes`.
pub fn read_labels(path: &Path, classes: usize) -> Result<Vec<usize>> {
    read_numeric_csv(path)?
        .into_iter()
        .map(|(line, row)| match row.as_slice() {
            [v] => to_label(path, line, *v, classes),
            _ => Err(parse_error(path, line, "expected exactly one label per line")),
        })
        .collect()
}

pub fn write_labels<W: Write>(out: W, labels: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "label")?;
    for y in labels {
        writeln!(out, "{}", y + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `x1,...,xD,label` rows.
pub fn read_dataset(path: &Path, classes: usize) -> Result<Dataset> {
    let rows = read_numeric_csv(path)?;
    let Some((_, first)) = rows.first() else {
        return Err(parse_error(path, 1, "no data rows"));
    };
    if first.len() < 2 {
        return Err(parse_error(path, rows[0].0, "need at least one feature and a label"));
    }
    let dim = first.len() - 1;
    let mut features = Vec::with_capacity(rows.len() * dim);
    let mut labels = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        if row.len() != dim + 1 {
            return Err(Error::DimensionMismatch { expected: dim + 1, found: row.len() });
        }
        features.extend_from_slice(&row[..dim]);
        labels.push(to_label(path, *line, row[dim], classes)?);
    }
    Dataset::new(features, dim, labels, classes)
}

pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(out);
    let mut header: Vec<String> = (1..=data.dim()).map(|d| format!("x{d}")).collect();
    header.push("label".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        writeln!(out, "{},{}", join(data.row(i)), data.labels()[i] + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `predicted_label,p_1..p_K`.
pub fn write_predictions<W: Write>(out: W, posteriors: &[ClassPosterior]) -> Result<()> {
    let mut out = BufWriter::new(out);
    let k = posteriors.first().map_or(0, |p| p.probs.len());
    let mut header = vec!["predicted_label".to_string()];
    header.extend((1..=k).map(|j| format!("p_{j}")));
    writeln!(out, "{}", header.join(","))?;
    for p in posteriors {
        writeln!(out, "{},{}", predict(p) + 1, join(&p.probs))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a predictions file back into posteriors.
pub fn read_predictions(path: &Path) -> Result<Vec<ClassPosterior>> {
    read_numeric_csv(path)?
        .into_iter()
        .map(|(line, row)| {
            if row.len() < 2 {
                return Err(parse_error(path, line, "expected a label and at least one probability"));
            }
            Ok(ClassPosterior { probs: row[1..].to_vec() })
        })
        .collect()
}
