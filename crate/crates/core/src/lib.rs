//! EEG pathology decoding: preprocessing, four convolutional architectures,
//! cropped training with transfer, augmentation and representation analysis.

pub mod analysis;
pub mod augment;
pub mod error;
pub mod models;
pub mod signal;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
