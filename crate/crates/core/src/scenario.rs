//! Flood scenario matrices and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the optional probability column in scenario files.
pub const PROB_COLUMN: &str = "#prob";

/// `K` scenarios of non-negative integer flood heights over `n` flooded
/// substations, with scenario probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    labels: Vec<String>,
    heights: Vec<Vec<u32>>,
    probs: Vec<f64>,
}

impl ScenarioSet {
    /// Equiprobable scenarios.
    pub fn new(labels: Vec<String>, heights: Vec<Vec<u32>>) -> Result<Self> {
        let k = heights.len();
        let probs = vec![1.0 / k.max(1) as f64; k];
        Self::with_probs(labels, heights, probs)
    }

    pub fn with_probs(labels: Vec<String>, heights: Vec<Vec<u32>>, probs: Vec<f64>) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::Validation("scenario set is empty".into()));
        }
        if probs.len() != heights.len() {
            return Err(Error::Validation(format!(
                "{} probabilities for {} scenarios",
                probs.len(),
                heights.len()
            )));
        }
        let n = labels.len();
        if let Some((k, row)) = heights.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Validation(format!(
                "scenario {k} has {} heights, expected {n}",
                row.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Validation(format!("duplicate column label '{dup}'")));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation(
                "scenario probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "scenario probabilities sum to {total}, expected 1"
            )));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self {
            labels,
            heights,
            probs,
        })
    }

    /// Numbered labels `0..n`.
    pub fn default_labels(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.heights
    }

    pub fn row(&self, k: usize) -> &[u32] {
        &self.heights[k]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.heights.iter().map(|r| f64::from(r[i])).collect()
    }

    /// Largest height seen in column `i`.
    pub fn column_max(&self, i: usize) -> u32 {
        self.heights.iter().map(|r| r[i]).max().unwrap_or(0)
    }

    fn is_uniform(&self) -> bool {
        let p = 1.0 / self.len() as f64;
        self.probs.iter().all(|&q| q == p)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path)
    }

    /// Parses the CSV layout: a header of column labels, optionally a
    /// `#prob` column, then one row of integer heights per scenario.
    pub fn from_reader<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: u64, column: usize, message: String| Error::Parse {
            file: origin.to_path_buf(),
            line,
            column,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| parse_err(1, 1, e.to_string()))?
            .clone();
        // A lone empty field is how a matrix with no columns is written.
        let no_columns = header.len() == 1 && header[0].is_empty();
        let prob_col = header.iter().position(|h| h == PROB_COLUMN);
        let labels: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != prob_col)
            .map(|(_, h)| h.to_string())
            .filter(|_| !no_columns)
            .collect();
        if let Some(c) = labels.iter().position(|l| l.is_empty()) {
            return Err(parse_err(1, c + 1, "empty column label".into()));
        }
        let mut heights = Vec::new();
        let mut probs = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, 1, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(parse_err(
                    line,
                    record.len().min(header.len()) + 1,
                    format!("expected {} fields, found {}", header.len(), record.len()),
                ));
            }
            let mut row = Vec::with_capacity(labels.len());
            if no_columns {
                if !record[0].is_empty() {
                    return Err(parse_err(line, 1, "value in a file without columns".into()));
                }
                heights.push(row);
                continue;
            }
            for (c, field) in record.iter().enumerate() {
                if Some(c) == prob_col {
                    let p: f64 = field
                        .parse()
                        .map_err(|_| parse_err(line, c + 1, format!("invalid probability '{field}'")))?;
                    probs.push(p);
                    continue;
                }
                row.push(parse_height(field).map_err(|m| parse_err(line, c + 1, m))?);
            }
            heights.push(row);
        }
        if heights.is_empty() {
            return Err(parse_err(2, 1, "no scenario rows".into()));
        }
        if prob_col.is_some() {
            Self::with_probs(labels, heights, probs)
        } else {
            Self::new(labels, heights)
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        let with_probs = !self.is_uniform();
        let mut header: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        if with_probs {
            header.push(PROB_COLUMN);
        }
        w.write_record(&header).map_err(io)?;
        for (row, p) in self.heights.iter().zip(&self.probs) {
            let mut fields: Vec<String> = row.iter().map(u32::to_string).collect();
            if with_probs {
                fields.push(format!("{p:?}"));
            }
            w.write_record(&fields).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Validation(format!("csv write failed: {e}")))
    }
}

fn parse_height(field: &str) -> std::result::Result<u32, String> {
    if let Ok(v) = field.parse::<u32>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) => {
            Ok(v as u32)
        }
        Ok(v) => Err(format!("flood height must be a non-negative integer, got {v}")),
        Err(_) => Err(format!("invalid flood height '{field}'")),
    }
}
