//! Opinion matrices (questions × options answer probabilities) and
//! population mixes over the models that produced them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must be within this of 1.
pub const ROW_TOLERANCE: f64 = 1e-6;
/// Mix weights must sum to 1 within this.
pub const MIX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OpinionError {
    #[error("invalid opinion data: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpinionMatrix {
    question_ids: Vec<String>,
    options: usize,
    data: Vec<f64>,
}

impl OpinionMatrix {
    pub fn new(question_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, OpinionError> {
        if question_ids.len() != rows.len() {
            return Err(OpinionError::Invalid(format!(
                "{} question ids for {} rows",
                question_ids.len(),
                rows.len()
            )));
        }
        let options = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * options);
        for (q, row) in question_ids.iter().zip(&rows) {
            if row.len() != options {
                return Err(OpinionError::Invalid(format!(
                    "row {q} has {} options, expected {options}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(OpinionError::Invalid(format!("row {q} has entries outside [0,1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(OpinionError::Invalid(format!("row {q} sums to {sum}")));
            }
            data.extend_from_slice(row);
        }
        for (i, q) in question_ids.iter().enumerate() {
            if question_ids[..i].contains(q) {
                return Err(OpinionError::Invalid(format!("duplicate question id {q}")));
            }
        }
        Ok(OpinionMatrix {
            question_ids,
            options,
            data,
        })
    }

    pub fn question_ids(&self) -> &[String] {
        &self.question_ids
    }

    pub fn num_questions(&self) -> usize {
        self.question_ids.len()
    }

    pub fn num_options(&self) -> usize {
        self.options
    }

    pub fn row_at(&self, index: usize) -> &[f64] {
        &self.data[index * self.options..(index + 1) * self.options]
    }

    pub fn row(&self, question_id: &str) -> Option<&[f64]> {
        self.question_ids
            .iter()
            .position(|q| q == question_id)
            .map(|i| self.row_at(i))
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &OpinionMatrix) -> bool {
        self.options == other.options && self.question_ids == other.question_ids
    }

    /// Same ids and shape, new entries; entries are not revalidated.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> OpinionMatrix {
        debug_assert_eq!(data.len(), self.data.len());
        OpinionMatrix {
            question_ids: self.question_ids.clone(),
            options: self.options,
            data,
        }
    }

    /// CSV with a header row; first column is the question id.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, OpinionError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter();
            let id = fields
                .next()
                .ok_or_else(|| OpinionError::Invalid("empty csv row".into()))?;
            let row = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| OpinionError::Invalid(format!("bad probability {f:?} in row {id}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            ids.push(id.trim().to_string());
            rows.push(row);
        }
        OpinionMatrix::new(ids, rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OpinionError> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["question_id".to_string()];
        header.extend((0..self.options).map(|j| format!("option_{j}")));
        writer.write_record(&header)?;
        for (i, q) in self.question_ids.iter().enumerate() {
            let mut record = vec![q.clone()];
            record.extend(self.row_at(i).iter().map(|p| p.to_string()));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Weights over labelled models (or persona clusters) on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMix {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
}

impl PopulationMix {
    pub fn new(labels: Vec<String>, weights: Vec<f64>) -> Result<Self, OpinionError> {
        if labels.len() != weights.len() || labels.is_empty() {
            return Err(OpinionError::Invalid(format!(
                "{} labels for {} weights",
                labels.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(OpinionError::Invalid("negative or NaN mix weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MIX_TOLERANCE {
            return Err(OpinionError::Invalid(format!("mix weights sum to {sum}")));
        }
        Ok(PopulationMix { labels, weights })
    }

    pub fn uniform(labels: Vec<String>) -> Self {
        let w = 1.0 / labels.len() as f64;
        let weights = vec![w; labels.len()];
        PopulationMix { labels, weights }
    }

    /// Normalizes nonnegative frequencies into a mix.
    pub fn from_frequencies(labels: Vec<String>, freqs: &[f64]) -> Result<Self, OpinionError> {
        let total: f64 = freqs.iter().sum();
        if !(total > 0.0) || freqs.iter().any(|f| !(*f >= 0.0)) {
            return Err(OpinionError::Invalid("frequencies must be nonnegative with positive sum".into()));
        }
        PopulationMix::new(labels, freqs.iter().map(|f| f / total).collect())
    }

    pub fn weight(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.weights[i])
    }
}
