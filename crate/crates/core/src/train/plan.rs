use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::models::{Arch, ModelSpec};

/// Published hyperparameters of one architecture family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub drop_prob: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
}

impl Hyper {
    pub fn preset(arch: Arch) -> Self {
        let (drop_prob, lr, weight_decay) = match arch {
            Arch::Tcn => (0.0527015, 0.0011261, 5.8373053e-07),
            Arch::Deep4Net => (0.5, 0.01, 0.0005),
            Arch::ShallowNet => (0.5, 0.000625, 0.0),
            Arch::EegNet => (0.25, 0.001, 0.0),
        };
        Self {
            drop_prob,
            batch_size: 64,
            lr,
            epochs: 35,
            weight_decay,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Every crop once per epoch in a seeded random order.
    #[default]
    Shuffle,
    /// Uniform over dataset, then class, then crop with replacement.
    Balanced,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitFrom {
    #[default]
    Random,
    Checkpoint {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    pub model: ModelSpec,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Crop stride in samples; defaults to the number of dense prediction
    /// positions so consecutive crops' outputs tile the recording.
    #[serde(default)]
    pub crop_stride: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub augment: AugmentPolicy,
    #[serde(default)]
    pub init: InitFrom,
    /// Layer-wise learning-rate decay toward the input; `None` is uniform.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default = "default_eval_batch")]
    pub eval_batch_size: usize,
}

fn default_eval_batch() -> usize {
    64
}

impl TrainPlan {
    /// Canonical model and published hyperparameters for `arch`.
    pub fn preset(arch: Arch) -> Self {
        let h = Hyper::preset(arch);
        let mut model = ModelSpec::canonical(arch);
        model.drop_prob = h.drop_prob;
        Self {
            model,
            batch_size: h.batch_size,
            lr: h.lr,
            epochs: h.epochs,
            weight_decay: h.weight_decay,
            crop_stride: None,
            seed: 0,
            augment: AugmentPolicy::default(),
            init: InitFrom::Random,
            gamma: None,
            sampler: SamplerKind::Shuffle,
            eval_batch_size: default_eval_batch(),
        }
    }

    pub fn crop_len(&self) -> usize {
        self.model.input_window_samples
    }

    pub fn stride(&self) -> Result<usize> {
        let p = self
            .model
            .n_positions(self.crop_len())
            .ok_or(Error::WindowTooShort {
                window: self.crop_len(),
                receptive_field: self.model.receptive_field(),
            })?;
        Ok(self.crop_stride.unwrap_or(p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.eval_batch_size == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, epochs and eval_batch_size must be at least 1".into(),
            ));
        }
        if !(self.lr >= 0.0
            && self.lr.is_finite()
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "lr {} and weight_decay {} must be finite and non-negative",
                self.lr, self.weight_decay
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::InvalidConfig(format!("gamma {g} outside (0, 1]")));
            }
        }
        let stride = self.stride()?;
        if stride == 0 || stride > self.crop_len() {
            return Err(Error::InvalidConfig(format!(
                "crop stride {stride} must lie in 1..={}",
                self.crop_len()
            )));
        }
        self.augment.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_published_values() {
        let t = TrainPlan::preset(Arch::Tcn);
        assert_eq!(
            (
                t.model.drop_prob,
                t.batch_size,
                t.lr,
                t.epochs,
                t.weight_decay
            ),
            (0.0527015, 64, 0.0011261, 35, 5.8373053e-07)
        );
        let d = Hyper::preset(Arch::Deep4Net);
        assert_eq!((d.drop_prob, d.lr, d.weight_decay), (0.5, 0.01, 0.0005));
        let s = Hyper::preset(Arch::ShallowNet);
        assert_eq!((s.drop_prob, s.lr, s.weight_decay), (0.5, 0.000625, 0.0));
        let e = Hyper::preset(Arch::EegNet);
        assert_eq!((e.drop_prob, e.lr, e.weight_decay), (0.25, 0.001, 0.0));
        for arch in Arch::ALL {
            TrainPlan::preset(arch).validate().unwrap();
        }
    }

    #[test]
    fn default_stride_is_positions() {
        let p = TrainPlan::preset(Arch::EegNet);
        assert_eq!(p.stride().unwrap(), 1000 - 619 + 1);
    }

    #[test]
    fn plan_round_trips_through_json() {
        let p = TrainPlan::preset(Arch::ShallowNet);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<TrainPlan>(&s).unwrap(), p);
    }
}
