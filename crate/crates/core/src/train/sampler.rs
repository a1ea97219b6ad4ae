//! Dataset x class balanced sampling.

use rand::Rng;

use crate::error::{Error, Result};

/// Crops of one (dataset, class) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Bucket {
    pub dataset: String,
    pub label: usize,
    pub items: Vec<usize>,
}

/// Draws a dataset uniformly, then a class uniformly among that dataset's
/// classes, then an item uniformly with replacement.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    datasets: Vec<Vec<Bucket>>,
    total: usize,
}

impl BalancedSampler {
    pub fn new(buckets: Vec<Bucket>) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::EmptyInput("no buckets to sample from".into()));
        }
        let total = buckets.iter().map(|b| b.items.len()).sum();
        let mut datasets: Vec<Vec<Bucket>> = Vec::new();
        for b in buckets {
            if b.items.is_empty() {
                return Err(Error::EmptyBucket {
                    dataset: b.dataset,
                    label: b.label.to_string(),
                });
            }
            match datasets.iter_mut().find(|d| d[0].dataset == b.dataset) {
                Some(d) => d.push(b),
                None => datasets.push(vec![b]),
            }
        }
        Ok(Self { datasets, total })
    }

    pub fn total_items(&self) -> usize {
        self.total
    }

    /// Draws per epoch: `ceil(total / batch_size)` batches.
    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.total.div_ceil(batch_size.max(1))
    }

    /// One draw as `(dataset index, bucket index within dataset, item)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize, usize) {
        let d = rng.random_range(0..self.datasets.len());
        let c = rng.random_range(0..self.datasets[d].len());
        let items = &self.datasets[d][c].items;
        (d, c, items[rng.random_range(0..items.len())])
    }

    pub fn batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<usize> {
        (0..batch_size).map(|_| self.draw(rng).2).collect()
    }
}
