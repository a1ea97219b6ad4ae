//! Run configuration: one TOML file with a section per command.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use eegxfer::augment::AugmentPolicy;
use eegxfer::models::{Arch, ModelSpec};
use eegxfer::signal::PreprocessConfig;
use eegxfer::synth::{SynthConfig, SynthDataset};
use eegxfer::train::{Hyper, SamplerKind, TrainPlan};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: Option<DataConfig>,
    pub plan: Option<PlanConfig>,
    pub synth: Option<SynthSection>,
    pub preprocess: Option<PreprocessSection>,
    pub finetune: Option<FinetuneSection>,
    pub eval: Option<EvalSection>,
    pub cka: Option<CkaSection>,
    pub scaling: Option<ScalingSection>,
    pub transfer: Option<TransferSection>,
    pub merged: Option<MergedSection>,
}

/// Where recordings come from and which of them to use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub manifest: PathBuf,
    /// Restrict to these dataset tags; all when absent.
    pub datasets: Option<Vec<String>>,
    /// Applied while loading; absent means the store is already preprocessed.
    pub preprocess: Option<PreprocessConfig>,
    /// Train fraction when the manifest has no validation rows.
    #[serde(default = "default_train_ratio")]
    pub train_ratio: f64,
}

fn default_train_ratio() -> f64 {
    0.8
}

/// A named architecture preset with optional overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub preset: Arch,
    /// Full architecture description; replaces the canonical one.
    pub model: Option<ModelSpec>,
    pub window: Option<usize>,
    pub drop_prob: Option<f64>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub crop_stride: Option<usize>,
    pub augment: Option<AugmentPolicy>,
    pub gamma: Option<f64>,
    pub sampler: Option<SamplerKind>,
    pub eval_batch_size: Option<usize>,
}

impl PlanConfig {
    pub fn resolve(&self, seed: u64) -> Result<TrainPlan> {
        let mut plan = TrainPlan::preset(self.preset);
        if let Some(m) = &self.model {
            if m.arch() != self.preset {
                bail!(
                    "model section describes `{}` but preset is `{}`",
                    m.arch(),
                    self.preset
                );
            }
            plan.model = m.clone();
            plan.model.drop_prob = Hyper::preset(self.preset).drop_prob;
        }
        if let Some(w) = self.window {
            plan.model.input_window_samples = w;
        }
        if let Some(p) = self.drop_prob {
            plan.model.drop_prob = p;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { plan.$f = v; })*};
        }
        set!(
            batch_size,
            lr,
            epochs,
            weight_decay,
            augment,
            sampler,
            eval_batch_size
        );
        plan.crop_stride = self.crop_stride;
        plan.gamma = self.gamma;
        plan.seed = seed;
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_synth_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_synth_datasets")]
    pub datasets: Vec<SynthDataset>,
    /// `edf` writes raw microvolt files; `eegx` writes the native container.
    #[serde(default = "default_synth_format")]
    pub format: String,
}

impl SynthSection {
    pub fn generator(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            sample_rate_hz: self.sample_rate_hz,
            datasets: self.datasets.clone(),
        }
    }
}

fn default_synth_rate() -> f64 {
    SynthConfig::default().sample_rate_hz
}

fn default_synth_datasets() -> Vec<SynthDataset> {
    SynthConfig::default().datasets
}

fn default_synth_format() -> String {
    "edf".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub manifest: PathBuf,
    #[serde(default)]
    pub settings: PreprocessConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    pub checkpoint: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: PathBuf,
    #[serde(default = "default_eval_split")]
    pub split: eegxfer::signal::Split,
    #[serde(default)]
    pub crop_stride: Option<usize>,
}

fn default_eval_split() -> eegxfer::signal::Split {
    eegxfer::signal::Split::Test
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CkaSection {
    pub checkpoint_a: PathBuf,
    /// Compared against itself when absent.
    pub checkpoint_b: Option<PathBuf>,
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    pub layers: Option<Vec<String>>,
    #[serde(default = "default_probe_batch")]
    pub batch_size: usize,
}

fn default_probe_size() -> usize {
    eegxfer::analysis::cka::PROBE_SIZE
}

fn default_probe_batch() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub source_checkpoint: PathBuf,
    pub source_tag: String,
    pub target_tag: String,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Fine-tuning variants; 1.0 means a uniform learning rate.
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
}

fn default_gammas() -> Vec<f64> {
    vec![1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergedSection {
    pub source_tag: String,
    pub target_tag: String,
    /// Column names in the table; the tags when absent.
    pub source_name: Option<String>,
    pub target_name: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.manifest);
        }
        if let Some(p) = &mut self.preprocess {
            fix(&mut p.manifest);
        }
        if let Some(f) = &mut self.finetune {
            fix(&mut f.checkpoint);
        }
        if let Some(e) = &mut self.eval {
            fix(&mut e.checkpoint);
        }
        if let Some(c) = &mut self.cka {
            fix(&mut c.checkpoint_a);
            if let Some(b) = &mut c.checkpoint_b {
                fix(b);
            }
        }
        if let Some(t) = &mut self.transfer {
            fix(&mut t.source_checkpoint);
        }
    }

    pub fn snapshot(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T> {
    section
        .as_ref()
        .with_context(|| format!("config is missing the [{name}] section"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\nbogus = 2").is_err());
        assert!(
            toml::from_str::<RunConfig>("[plan]\npreset = \"eegnet\"\nlearning_rate = 0.1")
                .is_err()
        );
    }

    #[test]
    fn preset_overrides_apply() {
        let cfg: RunConfig =
            toml::from_str("[plan]\npreset = \"deep4net\"\nepochs = 3\nwindow = 700").unwrap();
        let plan = cfg.plan.unwrap().resolve(9).unwrap();
        assert_eq!(
            (
                plan.epochs,
                plan.lr,
                plan.model.input_window_samples,
                plan.seed
            ),
            (3, 0.01, 700, 9)
        );
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg: RunConfig = toml::from_str(
            "seed = 4\n[plan]\npreset = \"tcn\"\n[synth]\nformat = \"eegx\"\n[[synth.datasets]]\ntag = \"a\"\n",
        )
        .unwrap();
        let back: RunConfig = toml::from_str(&cfg.snapshot().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
