use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledDataset};

/// Layout of a numeric CSV file: `feature_count` feature columns plus one
/// integer label column (the last one unless `label_column` says otherwise).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub feature_count: usize,
    #[serde(default)]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub skip_header: bool,
}

impl CsvSchema {
    pub fn new(feature_count: usize) -> Self {
        CsvSchema { feature_count, label_column: None, skip_header: false }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), msg: e.to_string() }
}

pub fn load_csv_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_csv_dataset(&text, schema)
}

/// Parses CSV text; labels are remapped to dense ids in ascending order of
/// their original values.
pub fn parse_csv_dataset(text: &str, schema: &CsvSchema) -> Result<LabeledDataset, DatasetError> {
    let width = schema.feature_count + 1;
    let label_col = schema.label_column.unwrap_or(schema.feature_count);
    if label_col >= width {
        return Err(DatasetError::Parse { line: 0, msg: format!("label column {label_col} outside {width} columns") });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.skip_header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(DatasetError::Parse { line, msg: format!("expected {width} fields, found {}", record.len()) });
        }
        for (col, field) in record.iter().enumerate() {
            if col == label_col {
                raw_labels.push(parse_label(field).ok_or_else(|| DatasetError::Parse {
                    line,
                    msg: format!("label `{field}` is not an integer"),
                })?);
            } else {
                let x: f64 = field.parse().map_err(|_| DatasetError::Parse {
                    line,
                    msg: format!("feature `{field}` in column {col} is not numeric"),
                })?;
                if !x.is_finite() {
                    return Err(DatasetError::Parse { line, msg: format!("feature `{field}` is not finite") });
                }
                features.push(x);
            }
        }
    }
    densify(features, raw_labels, schema.feature_count)
}

fn parse_label(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    let x: f64 = field.parse().ok()?;
    (x.fract() == 0.0 && x.is_finite()).then_some(x as i64)
}

fn densify(features: Vec<f64>, raw_labels: Vec<i64>, feature_count: usize) -> Result<LabeledDataset, DatasetError> {
    if raw_labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    let values: Vec<i64> = raw_labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw_labels
        .iter()
        .map(|v| values.binary_search(v).expect("label collected above"))
        .collect();
    LabeledDataset::with_label_values(features, labels, feature_count, values)
}

/// Reads one split of the original UCI HAR layout: whitespace-separated
/// `X_<split>.txt` and `y_<split>.txt` under `<dir>/<split>/`.
pub fn load_uci_har_split(dir: impl AsRef<Path>, split: &str) -> Result<LabeledDataset, DatasetError> {
    let base = dir.as_ref().join(split);
    let x_path = base.join(format!("X_{split}.txt"));
    let y_path = base.join(format!("y_{split}.txt"));
    let x_text = std::fs::read_to_string(&x_path).map_err(|e| io_err(&x_path, e))?;
    let y_text = std::fs::read_to_string(&y_path).map_err(|e| io_err(&y_path, e))?;

    let mut features = Vec::new();
    let mut feature_count = None;
    for (i, line) in x_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DatasetError::Parse { line: i + 1, msg: format!("{}: {e}", x_path.display()) })?;
        match feature_count {
            None => feature_count = Some(row.len()),
            Some(n) if n != row.len() => {
                return Err(DatasetError::Parse {
                    line: i + 1,
                    msg: format!("expected {n} features, found {}", row.len()),
                })
            }
            Some(_) => {}
        }
        features.extend(row);
    }
    let raw_labels = y_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_label(l.trim()).ok_or_else(|| DatasetError::Parse {
                line: i + 1,
                msg: format!("{}: label `{}` is not an integer", y_path.display(), l.trim()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let feature_count = feature_count.ok_or(DatasetError::Empty)?;
    if features.len() != raw_labels.len() * feature_count {
        return Err(DatasetError::Shape { values: features.len(), features: feature_count, samples: raw_labels.len() });
    }
    densify(features, raw_labels, feature_count)
}
