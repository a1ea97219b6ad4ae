//! Synthetic two-dataset EEG stand-in.
//!
//! The class is carried by a band-limited oscillation whose frequency
//! depends on the label and whose spatial pattern is shared by every
//! dataset. Datasets differ in background-noise colour, per-channel gains
//! and optionally a label-independent distractor rhythm.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::montage::standard_montage;
use crate::signal::{Gender, Label, Recording, RecordingMeta, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthDataset {
    pub tag: String,
    pub n_train: usize,
    pub n_test: usize,
    pub abnormal_fraction: f64,
    pub duration_s: f64,
    /// Mean of the two class frequencies.
    pub center_hz: f64,
    /// Abnormal minus normal oscillation frequency.
    pub separation_hz: f64,
    pub freq_jitter_hz: f64,
    pub signal_uv: f64,
    pub noise_uv: f64,
    /// AR(1) coefficient of the background noise; larger is redder.
    pub noise_ar: f64,
    /// Channel gains are drawn from `1 +- gain_spread`.
    pub gain_spread: f64,
    /// Label-independent rhythm: one of these frequencies per recording.
    pub distractor_hz: Vec<f64>,
    pub distractor_uv: f64,
}

impl Default for SynthDataset {
    fn default() -> Self {
        Self {
            tag: "source".into(),
            n_train: 200,
            n_test: 60,
            abnormal_fraction: 0.5,
            duration_s: 10.0,
            center_hz: 10.0,
            separation_hz: 3.0,
            freq_jitter_hz: 0.5,
            signal_uv: 10.0,
            noise_uv: 20.0,
            noise_ar: 0.9,
            gain_spread: 0.2,
            distractor_hz: Vec::new(),
            distractor_uv: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub datasets: Vec<SynthDataset>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate_hz: 100.0,
            datasets: vec![
                SynthDataset::default(),
                SynthDataset {
                    tag: "target".into(),
                    n_train: 100,
                    n_test: 60,
                    noise_ar: 0.6,
                    gain_spread: 0.5,
                    ..SynthDataset::default()
                },
            ],
        }
    }
}

impl SynthDataset {
    pub fn validate(&self, fs: f64) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::InvalidConfig(format!(
                "dataset `{}`: {msg}",
                self.tag
            )))
        };
        if self.tag.is_empty() {
            return bad("empty tag".into());
        }
        if !(0.0..=1.0).contains(&self.abnormal_fraction) {
            return bad(format!(
                "abnormal_fraction {} outside [0, 1]",
                self.abnormal_fraction
            ));
        }
        if !positive(self.duration_s) {
            return bad("duration must be positive".into());
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return bad(format!("noise_ar {} outside [0, 1)", self.noise_ar));
        }
        if !(0.0..1.0).contains(&self.gain_spread) {
            return bad(format!("gain_spread {} outside [0, 1)", self.gain_spread));
        }
        let top = self.center_hz + self.separation_hz.abs() / 2.0 + self.freq_jitter_hz;
        let bottom = self.center_hz - self.separation_hz.abs() / 2.0 - self.freq_jitter_hz;
        if bottom <= 0.0
            || top >= fs / 2.0
            || self
                .distractor_hz
                .iter()
                .any(|&f| f <= 0.0 || f >= fs / 2.0)
        {
            return bad(format!(
                "oscillation frequencies must lie in (0, {}) Hz",
                fs / 2.0
            ));
        }
        if [
            self.signal_uv,
            self.noise_uv,
            self.distractor_uv,
            self.freq_jitter_hz,
        ]
        .iter()
        .any(|v| v.is_nan() || *v < 0.0)
        {
            return bad("amplitudes and jitter must be non-negative".into());
        }
        Ok(())
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !positive(self.sample_rate_hz) || self.datasets.is_empty() {
            return Err(Error::InvalidConfig(
                "need a positive rate and at least one dataset".into(),
            ));
        }
        for (i, d) in self.datasets.iter().enumerate() {
            d.validate(self.sample_rate_hz)?;
            if self.datasets[..i].iter().any(|o| o.tag == d.tag) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate dataset tag `{}`",
                    d.tag
                )));
            }
        }
        Ok(())
    }
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

/// Weight of the class rhythm on each channel; posterior channels carry most.
fn spatial_pattern(n: usize) -> Vec<f64> {
    (0..n)
        .map(|c| 0.4 + 0.6 * (0.5 + 0.5 * (c as f64 * 0.9).cos()))
        .collect()
}

/// Every recording of every dataset, train split first then test, in
/// config order. Values are in microvolts.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Recording>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (di, d) in cfg.datasets.iter().enumerate() {
        out.extend(generate_dataset(
            d,
            cfg.sample_rate_hz,
            cfg.seed,
            di as u64,
        )?);
    }
    Ok(out)
}

fn generate_dataset(d: &SynthDataset, fs: f64, seed: u64, index: u64) -> Result<Vec<Recording>> {
    let channels = standard_montage();
    let nc = channels.len();
    let mut ds_rng = ChaCha8Rng::seed_from_u64(seed);
    ds_rng.set_stream(1000 + index);
    let gains: Vec<f64> = (0..nc)
        .map(|_| 1.0 + d.gain_spread * ds_rng.random_range(-1.0..=1.0))
        .collect();
    let pattern = spatial_pattern(nc);
    let n_samples = (d.duration_s * fs).round() as usize;
    let mut out = Vec::with_capacity(d.n_train + d.n_test);
    for (split, n) in [(Split::Train, d.n_train), (Split::Test, d.n_test)] {
        let n_abnormal = (d.abnormal_fraction * n as f64).round() as usize;
        for k in 0..n {
            let label = if k < n_abnormal {
                Label::Abnormal
            } else {
                Label::Normal
            };
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (index << 40) ^ ((split as u64) << 32) ^ k as u64);
            let sign = if label == Label::Abnormal { 0.5 } else { -0.5 };
            let f = d.center_hz
                + sign * d.separation_hz
                + d.freq_jitter_hz * rng.random_range(-1.0..=1.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let env_phase = rng.random_range(0.0..std::f64::consts::TAU);
            let distractor = (!d.distractor_hz.is_empty()).then(|| {
                (
                    d.distractor_hz[rng.random_range(0..d.distractor_hz.len())],
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            });
            let innovation = Normal::new(0.0, d.noise_uv * (1.0 - d.noise_ar * d.noise_ar).sqrt())
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let mut data = Array2::<f32>::zeros((nc, n_samples));
            for c in 0..nc {
                let mut ar = d.noise_uv * Normal::new(0.0, 1.0).unwrap().sample(&mut rng);
                for t in 0..n_samples {
                    let ts = t as f64 / fs;
                    let env = 0.7 + 0.3 * (std::f64::consts::TAU * 0.2 * ts + env_phase).sin();
                    let mut v = d.signal_uv
                        * pattern[c]
                        * env
                        * (std::f64::consts::TAU * f * ts + phase).sin();
                    if let Some((fd, pd)) = distractor {
                        v += d.distractor_uv
                            * pattern[c]
                            * (std::f64::consts::TAU * fd * ts + pd).sin();
                    }
                    ar = d.noise_ar * ar + innovation.sample(&mut rng);
                    data[[c, t]] = (gains[c] * (v + ar)) as f32;
                }
            }
            let mut meta =
                RecordingMeta::new(format!("{}_{}_{k:04}", d.tag, split.as_str()), label);
            meta.dataset_tag = d.tag.clone();
            meta.split = split;
            meta.age_years = Some(rng.random_range(18.0f64..90.0).round());
            meta.gender = Some(if rng.random::<bool>() {
                Gender::Male
            } else {
                Gender::Female
            });
            out.push(Recording::new(meta, channels.clone(), data, fs)?);
        }
    }
    Ok(out)
}
