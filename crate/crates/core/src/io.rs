//! CSV and JSON interchange. Class indices are 1-based and `K` comes from
//! the header.
//!
//! * probabilities: `x_id,p_1,...,p_K`
//! * labels: `x_id,y`
//! * atoms: `mass,p_1,...,p_K`

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use crate::data::ProbabilityMatrix;
use crate::envelope::validate_row;
use crate::error::{Error, Result};
use crate::oracle::{Atom, AtomicModel};

fn open(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let at = e
        .position()
        .map(|p| format!(" line {}", p.line()))
        .unwrap_or_default();
    Error::InvalidConfig(format!("{}:{at}: {e}", path.display()))
}

/// Column count of a header `prefix,p_1,...,p_K`.
fn probability_columns(path: &Path, header: &csv::StringRecord, first: &str) -> Result<usize> {
    let bad = || {
        Error::InvalidConfig(format!(
            "{}: line 1: expected header {first},p_1,...,p_K, got {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        ))
    };
    if header.len() < 2 || &header[0] != first {
        return Err(bad());
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("p_{}", j + 1) {
            return Err(bad());
        }
    }
    Ok(header.len() - 1)
}

fn parse_number(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::InvalidConfig(format!(
            "{}: line {line}: {what} {field:?} is not a number",
            path.display()
        ))
    })
}

/// Reads a probability file; returns the ids in file order and the rows.
pub fn read_probabilities(path: &Path) -> Result<(Vec<String>, ProbabilityMatrix)> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let k = probability_columns(path, &header, "x_id")?;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let id = record[0].to_string();
        let row = record
            .iter()
            .skip(1)
            .map(|f| parse_number(path, line, f, "probability"))
            .collect::<Result<Vec<f64>>>()?;
        validate_row(&row, k, ids.len()).map_err(|e| {
            Error::InvalidConfig(format!("{}: line {line} (x_id {id}): {e}", path.display()))
        })?;
        ids.push(id);
        values.extend(row);
    }
    Ok((ids, ProbabilityMatrix::new(k, values)?))
}

/// Reads labels and orders them like `ids`; every id needs exactly one label.
pub fn read_labels(path: &Path, ids: &[String], k: usize) -> Result<Vec<u32>> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 2 || &header[0] != "x_id" || &header[1] != "y" {
        return Err(Error::InvalidConfig(format!(
            "{}: line 1: expected header x_id,y",
            path.display()
        )));
    }
    let mut by_id: HashMap<String, u32> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let y: u32 = record[1].parse().map_err(|_| {
            Error::InvalidConfig(format!(
                "{}: line {line}: label {:?} is not a class index",
                path.display(),
                &record[1]
            ))
        })?;
        if y == 0 || y as usize > k {
            return Err(Error::InvalidConfig(format!(
                "{}: line {line}: label {y} outside 1..={k}",
                path.display()
            )));
        }
        if by_id.insert(record[0].to_string(), y).is_some() {
            return Err(Error::InvalidConfig(format!(
                "{}: line {line}: duplicate x_id {}",
                path.display(),
                &record[0]
            )));
        }
    }
    ids.iter()
        .map(|id| {
            by_id.get(id).copied().ok_or_else(|| {
                Error::InvalidConfig(format!("{}: no label for x_id {id}", path.display()))
            })
        })
        .collect()
}

pub fn read_atoms(path: &Path) -> Result<AtomicModel> {
    let mut reader = open(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    probability_columns(path, &header, "mass")?;
    let mut atoms = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let mass = parse_number(path, line, &record[0], "mass")?;
        let probs = record
            .iter()
            .skip(1)
            .map(|f| parse_number(path, line, f, "probability"))
            .collect::<Result<Vec<f64>>>()?;
        atoms.push(Atom { mass, probs });
    }
    AtomicModel::new(atoms)
}

/// Writes `x_id,p_1,...,p_K` rows.
pub fn write_probabilities(path: &Path, ids: &[String], probs: &ProbabilityMatrix) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidConfig(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["x_id".to_string()];
    header.extend((1..=probs.k()).map(|j| format!("p_{j}")));
    w.write_record(&header).map_err(io)?;
    for (id, row) in ids.iter().zip(probs.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[u32]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidConfig(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["x_id", "y"]).map_err(io)?;
    for (id, y) in ids.iter().zip(labels) {
        w.write_record([id.clone(), y.to_string()]).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::InvalidConfig(format!(
            "{}: line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}
