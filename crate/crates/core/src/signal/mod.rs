//! Recording types, file formats and the preprocessing chain.

mod container;
mod edf;
mod manifest;
pub mod montage;
mod preprocess;
mod resample;
mod split;

pub use container::{read_container, write_container, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use edf::{parse_edf, write_edf, EdfHeader, EdfSignal};
pub use manifest::{load_recording, read_manifest, write_manifest, ManifestEntry};
pub use preprocess::{preprocess, PreprocessConfig};
pub use resample::Resampler;
pub use split::split_train_valid;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary pathology label. The class index is 0 for normal, 1 for abnormal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Abnormal),
            _ => Err(Error::InvalidInput(format!("label index {i} out of range"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

/// Everything about a recording except its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub id: String,
    pub label: Label,
    pub dataset_tag: String,
    pub split: Split,
    pub age_years: Option<f64>,
    pub gender: Option<Gender>,
}

impl RecordingMeta {
    pub fn new(id: impl Into<String>, label: Label) -> Self {
        Self {
            id: id.into(),
            label,
            dataset_tag: String::new(),
            split: Split::Train,
            age_years: None,
            gender: None,
        }
    }
}

/// One multichannel recording, `data` is `[channels, samples]` in microvolts
/// (or normalized units after [`preprocess`]).
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub channels: Vec<String>,
    pub data: Array2<f32>,
    pub sample_rate_hz: f64,
}

impl Recording {
    pub fn new(
        meta: RecordingMeta,
        channels: Vec<String>,
        data: Array2<f32>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if data.nrows() != channels.len() {
            return Err(Error::InvalidInput(format!(
                "{} data rows for {} channel labels",
                data.nrows(),
                channels.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate {sample_rate_hz} is not positive"
            )));
        }
        Ok(Self {
            meta,
            channels,
            data,
            sample_rate_hz,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn label(&self) -> Label {
        self.meta.label
    }
}
