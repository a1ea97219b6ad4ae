use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::montage::{match_montage, standard_montage};
use super::{Recording, Resampler};
use crate::error::{Error, Result};

/// Spread below which a channel is treated as flat.
const FLAT_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub montage: Vec<String>,
    pub drop_first_s: f64,
    pub max_duration_s: f64,
    pub target_rate_hz: f64,
    pub clip_uv: f64,
    /// Shortest acceptable output, in samples at the target rate.
    pub min_output_samples: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            montage: standard_montage(),
            drop_first_s: 60.0,
            max_duration_s: 20.0 * 60.0,
            target_rate_hz: 100.0,
            clip_uv: 800.0,
            min_output_samples: 600,
        }
    }
}

/// Channel selection, onset removal, duration cap, resampling, clipping,
/// per-channel z-scoring and per-channel min-max scaling to [0, 1].
pub fn preprocess(rec: &Recording, cfg: &PreprocessConfig) -> Result<Recording> {
    let rows = match_montage(&rec.channels, &cfg.montage).map_err(Error::MissingChannels)?;
    let rate = rec.sample_rate_hz;
    let start = (cfg.drop_first_s * rate).round() as usize;
    let cap = (cfg.max_duration_s * rate).round() as usize;
    let available = rec.n_samples().saturating_sub(start);
    let kept = available.min(cap);

    let resampler = Resampler::new(rate, cfg.target_rate_hz)?;
    let n_out = resampler.output_len(kept);
    if n_out < cfg.min_output_samples.max(1) {
        return Err(Error::TooShort {
            id: rec.meta.id.clone(),
            samples: n_out,
            required: cfg.min_output_samples.max(1),
        });
    }

    let mut data = Array2::<f32>::zeros((rows.len(), n_out));
    for (out_row, &src) in rows.iter().enumerate() {
        let segment: Vec<f32> = rec
            .data
            .row(src)
            .iter()
            .skip(start)
            .take(kept)
            .copied()
            .collect();
        let mut x: Vec<f64> = resampler
            .apply(&segment)
            .into_iter()
            .map(|v| (v as f64).clamp(-cfg.clip_uv, cfg.clip_uv))
            .collect();
        zscore(&mut x);
        min_max(&mut x);
        for (d, v) in data.row_mut(out_row).iter_mut().zip(x) {
            *d = v as f32;
        }
    }
    Recording::new(
        rec.meta.clone(),
        cfg.montage.clone(),
        data,
        cfg.target_rate_hz,
    )
}

fn zscore(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < FLAT_EPS {
        x.fill(0.0);
    } else {
        x.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
}

fn min_max(x: &mut [f64]) {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range < FLAT_EPS {
        x.fill(0.0);
    } else {
        x.iter_mut().for_each(|v| *v = (*v - lo) / range);
    }
}
