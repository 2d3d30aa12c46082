//! Categorical datasets and their CSV format.
//!
//! ```text
//! var_0,var_1,var_2
//! 2,2,2
//! 0,1,1
//! 1,0,1
//! ```
//!
//! The first line names the variables, the second gives their
//! cardinalities, and every further line is one 0-based observation. All
//! variables must share the same cardinality.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::models::{config_to_index, Configuration};
use crate::{seed, DenseTensor, Error, Result};

/// Disjoint row-index partitions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_vars: usize,
    card: usize,
    rows: Vec<Configuration>,
    splits: Option<Splits>,
}

impl Dataset {
    pub fn new(n_vars: usize, card: usize, rows: Vec<Configuration>) -> Result<Self> {
        if n_vars == 0 || card == 0 {
            return Err(Error::InvalidArgument("empty variable set".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_vars {
                return Err(Error::InvalidConfiguration(format!(
                    "row {i} has {} values, expected {n_vars}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|&&v| v >= card) {
                return Err(Error::InvalidConfiguration(format!(
                    "row {i} has value {v} outside cardinality {card}"
                )));
            }
        }
        Ok(Dataset {
            n_vars,
            card,
            rows,
            splits: None,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn cardinality(&self) -> usize {
        self.card
    }

    pub fn rows(&self) -> &[Configuration] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn splits(&self) -> Option<&Splits> {
        self.splits.as_ref()
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self> {
        let mut seen = vec![false; self.rows.len()];
        for &i in splits.train.iter().chain(&splits.valid).chain(&splits.test) {
            if i >= self.rows.len() {
                return Err(Error::InvalidArgument(format!("split index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("row {i} is in two splits")));
            }
        }
        self.splits = Some(splits);
        Ok(self)
    }

    /// Shuffle the rows with `seed` and cut them into train, validation and
    /// test sets of the given sizes (the test set takes what is left).
    pub fn random_splits(self, n_train: usize, n_valid: usize, seed: u64) -> Result<Self> {
        if n_train + n_valid > self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot take {n_train} + {n_valid} rows from {}",
                self.rows.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.shuffle(&mut seed::rng(seed));
        let test = idx.split_off(n_train + n_valid);
        let valid = idx.split_off(n_train);
        self.with_splits(Splits {
            train: idx,
            valid,
            test,
        })
    }

    /// New dataset made of the given rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            n_vars: self.n_vars,
            card: self.card,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            splits: None,
        }
    }

    /// Empirical distribution as a dense tensor of shape `[d; N]`.
    pub fn empirical(&self, cap: usize) -> Result<DenseTensor> {
        let size = crate::tensor::checked_dense_size(self.card, self.n_vars, cap)?;
        if self.rows.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let mut p = vec![0.0; size];
        let w = 1.0 / self.rows.len() as f64;
        for r in &self.rows {
            p[config_to_index(r, self.card)] += w;
        }
        DenseTensor::from_real(vec![self.card; self.n_vars], &p)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let parse_err = |line: u64, column: usize, msg: String| Error::Parse {
            line: line as usize,
            column,
            msg,
        };
        let header = match records.next() {
            Some(r) => r.map_err(|e| parse_err(1, 0, e.to_string()))?,
            None => return Err(parse_err(1, 0, "missing header line".into())),
        };
        let n_vars = header.len();
        let cards_rec = match records.next() {
            Some(r) => r.map_err(|e| parse_err(2, 0, e.to_string()))?,
            None => return Err(parse_err(2, 0, "missing cardinality line".into())),
        };
        let parse_row = |rec: &csv::StringRecord, line: u64| -> Result<Vec<usize>> {
            if rec.len() != n_vars {
                return Err(parse_err(
                    line,
                    rec.len().min(n_vars) + 1,
                    format!("expected {n_vars} fields, found {}", rec.len()),
                ));
            }
            rec.iter()
                .enumerate()
                .map(|(j, f)| {
                    f.parse::<usize>()
                        .map_err(|_| parse_err(line, j + 1, format!("not a non-negative integer: {f:?}")))
                })
                .collect()
        };
        let cards = parse_row(&cards_rec, 2)?;
        let card = cards[0];
        if let Some(j) = cards.iter().position(|&c| c != card) {
            return Err(parse_err(
                2,
                j + 1,
                format!("mixed cardinalities ({} and {card}) are not supported", cards[j]),
            ));
        }
        if card == 0 {
            return Err(parse_err(2, 1, "cardinality must be positive".into()));
        }
        let mut rows = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, 0, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let row = parse_row(&rec, line)?;
            if let Some(j) = row.iter().position(|&v| v >= card) {
                return Err(parse_err(
                    line,
                    j + 1,
                    format!("value {} is out of range for cardinality {card}", row[j]),
                ));
            }
            rows.push(Configuration(row));
        }
        Dataset::new(n_vars, card, rows)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record((0..self.n_vars).map(|i| format!("var_{i}")))
            .map_err(csv_err)?;
        w.write_record(std::iter::repeat_n(self.card.to_string(), self.n_vars))
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}
