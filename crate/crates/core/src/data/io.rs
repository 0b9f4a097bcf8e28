use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Standardization};
use crate::error::{Error, Result};

/// Column names to read from a user CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub group_column: String,
    pub label_column: String,
    /// Feature columns; `None` means every column except group and label.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
}

/// Loads a header-first CSV into a standardized [`Dataset`].
///
/// Groups are re-indexed in order of first appearance. Features are scaled
/// to zero mean and unit variance over the whole file; the constants are
/// kept on the dataset.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in {}", path.display())))
    };
    let group_col = position(&schema.group_column)?;
    let label_col = position(&schema.label_column)?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != group_col && *i != label_col)
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let feature_cols = feature_names
        .iter()
        .map(|name| position(name))
        .collect::<Result<Vec<_>>>()?;
    let d = feature_cols.len();

    let mut features = Vec::new();
    let mut group = Vec::new();
    let mut label = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |col: usize| record.get(col).unwrap_or("");
        let raw_label = cell(label_col);
        let y = parse_label(raw_label).ok_or_else(|| Error::Parse {
            row: line,
            column: schema.label_column.clone(),
            value: raw_label.to_string(),
        })?;
        for (&col, name) in feature_cols.iter().zip(&feature_names) {
            let raw = cell(col);
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: name.clone(),
                    value: raw.to_string(),
                })?;
            features.push(v);
        }
        let g = cell(group_col).to_string();
        let next = names.len();
        let id = *index.entry(g.clone()).or_insert_with(|| {
            names.push(g);
            next
        });
        group.push(id);
        label.push(y);
    }
    if label.is_empty() {
        return Err(Error::DegenerateData(format!("{} has no data rows", path.display())));
    }
    if label.iter().all(|&y| y == label[0]) {
        return Err(Error::DegenerateData(format!(
            "label column `{}` only contains class {}",
            schema.label_column, label[0]
        )));
    }
    let standardization = Standardization::fit(feature_names, &features, d);
    for row in features.chunks_exact_mut(d) {
        standardization.apply(row);
    }
    Ok(Dataset::with_group_names(features, d, group, label, names)?.with_standardization(standardization))
}

fn parse_label(raw: &str) -> Option<u8> {
    match raw {
        "0" => Some(0),
        "1" => Some(1),
        other => match other.parse::<f64>() {
            Ok(0.0) => Some(0),
            Ok(1.0) => Some(1),
            _ => None,
        },
    }
}

/// Writes the canonical encoding (see [`Dataset::to_canonical_csv`]).
pub fn write_canonical(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ds.to_canonical_csv()).map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`write_canonical`]. Values are taken verbatim;
/// no re-indexing or standardization happens.
pub fn read_canonical(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let headers = reader.headers()?.clone();
    if headers.len() < 4 || &headers[0] != "group_id" || &headers[1] != "group" || &headers[2] != "label" {
        return Err(Error::Schema(format!(
            "{} is not a canonical dataset file (expected group_id,group,label,x0,...)",
            path.display()
        )));
    }
    let d = headers.len() - 3;
    let mut features = Vec::new();
    let mut group = Vec::new();
    let mut label = Vec::new();
    let mut names: Vec<Option<String>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |col: usize| Error::Parse {
            row: line,
            column: headers[col].to_string(),
            value: record[col].to_string(),
        };
        let g: usize = record[0].parse().map_err(|_| parse_err(0))?;
        let y = parse_label(&record[2]).ok_or_else(|| parse_err(2))?;
        for col in 3..3 + d {
            features.push(record[col].parse::<f64>().map_err(|_| parse_err(col))?);
        }
        if names.len() <= g {
            names.resize(g + 1, None);
        }
        names[g].get_or_insert_with(|| record[1].to_string());
        group.push(g);
        label.push(y);
    }
    let names = names
        .into_iter()
        .enumerate()
        .map(|(g, n)| n.unwrap_or_else(|| g.to_string()))
        .collect();
    Dataset::with_group_names(features, d, group, label, names)
}
