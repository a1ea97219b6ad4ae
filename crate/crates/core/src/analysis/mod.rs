//! Representation similarity, metrics and experiment harnesses.

pub mod cka;
pub mod harness;
pub mod metrics;

pub use cka::{cka_heatmap, linear_cka, probe_activations, ActivationMatrix, CkaMatrix};
pub use metrics::{balanced_accuracy, mean_and_sem, Confusion, MetricsReport};
