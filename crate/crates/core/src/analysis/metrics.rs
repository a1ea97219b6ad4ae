//! Balanced accuracy and per-dataset reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 confusion counts, `counts[truth][pred]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[usize; 2]; 2],
}

impl Confusion {
    pub fn from_pairs(preds: &[usize], truth: &[usize]) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(Error::InvalidInput(format!(
                "{} predictions for {} targets",
                preds.len(),
                truth.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &t) in preds.iter().zip(truth) {
            if p > 1 || t > 1 {
                return Err(Error::InvalidInput(format!(
                    "class index {} out of range",
                    p.max(t)
                )));
            }
            c.counts[t][p] += 1;
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Recall of each class; errors if a class never occurs in the truth.
    pub fn recalls(&self) -> Result<[f64; 2]> {
        let mut r = [0.0; 2];
        for (k, row) in self.counts.iter().enumerate() {
            let n = row[0] + row[1];
            if n == 0 {
                return Err(Error::MissingClass(k));
            }
            r[k] = row[k] as f64 / n as f64;
        }
        Ok(r)
    }

    pub fn balanced_accuracy(&self) -> Result<f64> {
        let r = self.recalls()?;
        Ok((r[0] + r[1]) / 2.0)
    }
}

/// Mean of the per-class recalls. Both classes must occur in `truth`.
pub fn balanced_accuracy(preds: &[usize], truth: &[usize]) -> Result<f64> {
    Confusion::from_pairs(preds, truth)?.balanced_accuracy()
}

/// Recording-level evaluation of one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub bac: f64,
    pub recall: [f64; 2],
    pub confusion: Confusion,
    pub n_recordings: usize,
}

impl MetricsReport {
    pub fn new(dataset: impl Into<String>, preds: &[usize], truth: &[usize]) -> Result<Self> {
        let confusion = Confusion::from_pairs(preds, truth)?;
        let recall = confusion.recalls()?;
        Ok(Self {
            dataset: dataset.into(),
            bac: (recall[0] + recall[1]) / 2.0,
            recall,
            confusion,
            n_recordings: truth.len(),
        })
    }
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
