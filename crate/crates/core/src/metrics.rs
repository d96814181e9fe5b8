//! Accuracy and round-indexed metrics persistence.

use std::fs;
use std::path::Path;

use crate::data::{format_float, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{Model, WeightVector};
use crate::scalar::Scalar;

/// Fraction of samples with `y * f(w, x) > 0`. A zero score counts as wrong.
pub fn accuracy<T: Scalar, M: Model<T>>(model: &M, w: &WeightVector<T>, data: &LabeledDataset<T>) -> Result<T> {
    data.require_nonempty()?;
    let mut correct = 0usize;
    for r in data.iter() {
        if r.label.sign::<T>() * model.predict(w, &r.features)? > T::zero() {
            correct += 1;
        }
    }
    Ok(T::of_count(correct) / T::of_count(data.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index; the record describes the model after the round.
    pub round: usize,
    pub global_train_loss: f64,
    pub test_accuracy: f64,
    pub participants: usize,
    /// Participants that reported after dropout.
    pub completed: usize,
    pub step_norm: f64,
}

pub const METRICS_HEADER: &str = "round,train_loss,test_accuracy,participants,completed,step_norm";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSink {
    rows: Vec<RoundRecord>,
    pub run_id: String,
    pub config_fingerprint: String,
}

impl MetricsSink {
    pub fn new(run_id: impl Into<String>, config_fingerprint: impl Into<String>) -> Self {
        MetricsSink {
            rows: Vec::new(),
            run_id: run_id.into(),
            config_fingerprint: config_fingerprint.into(),
        }
    }

    /// Appends a record; round indices must strictly increase.
    pub fn push(&mut self, record: RoundRecord) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if record.round <= last.round {
                return Err(Error::domain(format!(
                    "round {} does not follow round {}",
                    record.round, last.round
                )));
            }
        }
        self.rows.push(record);
        Ok(())
    }

    pub fn rows(&self) -> &[RoundRecord] {
        &self.rows
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.round,
                format_float(r.global_train_loss),
                format_float(r.test_accuracy),
                r.participants,
                r.completed,
                format_float(r.step_norm)
            ));
        }
        s
    }
}

impl Extend<RoundRecord> for MetricsSink {
    fn extend<I: IntoIterator<Item = RoundRecord>>(&mut self, iter: I) {
        for r in iter {
            self.push(r).expect("records in increasing round order");
        }
    }
}

pub fn write_metrics_csv(sink: &MetricsSink, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, sink.to_csv_string()).map_err(|e| Error::io(path, e))
}

/// Parses text produced by [`MetricsSink::to_csv_string`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<RoundRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::data("metrics file does not start with the expected header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::data(format!("metrics line {}: malformed row `{line}`", i + 2));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 6 {
                return Err(bad());
            }
            Ok(RoundRecord {
                round: cells[0].parse().map_err(|_| bad())?,
                global_train_loss: cells[1].parse().map_err(|_| bad())?,
                test_accuracy: cells[2].parse().map_err(|_| bad())?,
                participants: cells[3].parse().map_err(|_| bad())?,
                completed: cells[4].parse().map_err(|_| bad())?,
                step_norm: cells[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
