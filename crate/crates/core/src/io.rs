//! Dataset files and embedded fixtures.
//!
//! CSV datasets have the header `x,count`; JSON datasets look like
//! `{"name": "...", "cells": [{"x": 0, "count": 23}, ...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::FrequencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Csv,
    Json,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => DatasetFormat::Json,
            _ => DatasetFormat::Csv,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DatasetFormat::Csv),
            "json" => Ok(DatasetFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown dataset format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCell {
    pub x: u64,
    pub count: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
    pub cells: Vec<DatasetCell>,
}

impl DatasetFile {
    pub fn to_table(&self) -> Result<FrequencyTable> {
        if self.cells.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut records = Vec::with_capacity(self.cells.len());
        for c in &self.cells {
            if c.count <= 0 {
                return Err(Error::NonPositiveCount { x: c.x, count: c.count });
            }
            records.push((c.x, c.count as u64));
        }
        FrequencyTable::from_counts(records)
    }
}

/// Male Drosophila counts of recessive-lethal daughters, day-177 run:
/// 23 males with 0, 7 with 1, 3 with 2 and one outlier with 91.
pub const DROSOPHILA_DAY177: &str = r#"{
  "name": "drosophila-day177",
  "source": "Woodruff et al. (1984) chemical mutagenicity experiment, day 177",
  "cells": [
    {"x": 0, "count": 23},
    {"x": 1, "count": 7},
    {"x": 2, "count": 3},
    {"x": 91, "count": 1}
  ]
}"#;

/// Named fixtures available without touching the filesystem.
pub fn fixture(name: &str) -> Option<FrequencyTable> {
    match name {
        "drosophila" | "drosophila-day177" => Some(parse_json(DROSOPHILA_DAY177).expect("fixture is valid")),
        _ => None,
    }
}

pub fn parse_csv(text: &str) -> Result<FrequencyTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "count" {
        return Err(Error::Parse { line: 1, message: "expected header 'x,count'".into() });
    }
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize, name: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing field '{name}'") })
        };
        let x = field(0, "x")?
            .parse::<u64>()
            .map_err(|e| Error::Parse { line, message: format!("field 'x': {e}") })?;
        let count = field(1, "count")?
            .parse::<i64>()
            .map_err(|e| Error::Parse { line, message: format!("field 'count': {e}") })?;
        cells.push(DatasetCell { x, count });
    }
    DatasetFile { name: None, source: None, cells }.to_table()
}

pub fn parse_json(text: &str) -> Result<FrequencyTable> {
    let file: DatasetFile =
        serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
    file.to_table()
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<FrequencyTable> {
    let text = std::fs::read_to_string(path)?;
    match format {
        DatasetFormat::Csv => parse_csv(&text),
        DatasetFormat::Json => parse_json(&text),
    }
}

/// A fixture name, or a path whose format is taken from `format` or the
/// file extension.
pub fn resolve_dataset(source: &str, format: Option<DatasetFormat>) -> Result<FrequencyTable> {
    if let Some(t) = fixture(source) {
        return Ok(t);
    }
    let path = Path::new(source);
    load_dataset(path, format.unwrap_or_else(|| DatasetFormat::from_path(path)))
}
