//! Stochastic crop augmentation.
//!
//! Six transforms, each triggered independently with `apply_probability`,
//! always composed in the same order: sign flip, channel dropout, frequency
//! shift, smooth time mask, band-stop filter, channel shuffle.

mod filter;
mod hilbert;
pub mod transforms;

pub use filter::{butter_bandstop, filtfilt, Biquad};
pub use hilbert::analytic_signal;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRANSFORM_NAMES: [&str; 6] = [
    "sign_flip",
    "channels_dropout",
    "frequency_shift",
    "smooth_time_mask",
    "bandstop_filter",
    "channels_shuffle",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub apply_probability: f64,
    pub sign_flip: bool,
    pub channels_dropout: bool,
    pub frequency_shift: bool,
    pub smooth_time_mask: bool,
    pub bandstop_filter: bool,
    pub channels_shuffle: bool,
    pub channel_dropout_p: f64,
    pub max_freq_shift_hz: f64,
    pub mask_len_samples: usize,
    pub bandstop_bw_hz: f64,
    pub bandstop_min_hz: f64,
    pub bandstop_max_hz: f64,
    pub shuffle_p: f64,
    pub sample_rate_hz: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            apply_probability: 0.1,
            sign_flip: true,
            channels_dropout: true,
            frequency_shift: true,
            smooth_time_mask: true,
            bandstop_filter: true,
            channels_shuffle: true,
            channel_dropout_p: 0.2,
            max_freq_shift_hz: 2.0,
            mask_len_samples: 600,
            bandstop_bw_hz: 1.0,
            bandstop_min_hz: 2.0,
            bandstop_max_hz: 45.0,
            shuffle_p: 0.2,
            sample_rate_hz: 100.0,
        }
    }
}

/// Which transforms fired on one crop, in pipeline order.
pub type Fired = [bool; 6];

impl AugmentPolicy {
    /// No transform ever fires.
    pub fn disabled() -> Self {
        Self {
            apply_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.apply_probability,
            self.channel_dropout_p,
            self.shuffle_p,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig(format!(
                "augmentation probabilities must lie in [0, 1]: {probs:?}"
            )));
        }
        if !(self.max_freq_shift_hz >= 0.0
            && self.bandstop_bw_hz > 0.0
            && self.sample_rate_hz > 0.0)
        {
            return Err(Error::InvalidConfig(
                "augmentation frequencies must be positive".into(),
            ));
        }
        let nyq = self.sample_rate_hz / 2.0;
        let half = self.bandstop_bw_hz / 2.0;
        if !(self.bandstop_min_hz - half > 0.0
            && self.bandstop_max_hz + half < nyq
            && self.bandstop_min_hz <= self.bandstop_max_hz)
        {
            return Err(Error::InvalidConfig(format!(
                "band-stop centres {}..{} Hz do not fit below {nyq} Hz",
                self.bandstop_min_hz, self.bandstop_max_hz
            )));
        }
        Ok(())
    }

    fn enabled(&self) -> [bool; 6] {
        [
            self.sign_flip,
            self.channels_dropout,
            self.frequency_shift,
            self.smooth_time_mask,
            self.bandstop_filter,
            self.channels_shuffle,
        ]
    }

    /// Augment one crop in place. The label is not an input, so it cannot change.
    pub fn apply<R: Rng + ?Sized>(&self, x: &mut Array2<f32>, rng: &mut R) -> Result<Fired> {
        let mut fired = [false; 6];
        for (i, on) in self.enabled().into_iter().enumerate() {
            // The trigger is drawn even for disabled transforms so that
            // toggling one does not reshuffle the others' randomness.
            let trigger = rng.random::<f64>() < self.apply_probability;
            if !(on && trigger) {
                continue;
            }
            fired[i] = true;
            match i {
                0 => transforms::sign_flip(x),
                1 => {
                    transforms::channels_dropout(x, self.channel_dropout_p, rng);
                }
                2 => {
                    let m = self.max_freq_shift_hz;
                    let shift = if m > 0.0 {
                        rng.random_range(-m..=m)
                    } else {
                        0.0
                    };
                    transforms::frequency_shift(x, shift, self.sample_rate_hz)?;
                }
                3 => {
                    let n = x.ncols();
                    if n < self.mask_len_samples {
                        return Err(Error::CropTooShort {
                            transform: "smooth_time_mask",
                            len: n,
                            required: self.mask_len_samples,
                        });
                    }
                    let start = rng.random_range(0..=n - self.mask_len_samples);
                    transforms::smooth_time_mask(x, start, self.mask_len_samples)?;
                }
                4 => {
                    let c = rng.random_range(self.bandstop_min_hz..=self.bandstop_max_hz);
                    transforms::bandstop_filter(x, c, self.bandstop_bw_hz, self.sample_rate_hz)?;
                }
                5 => {
                    transforms::channels_shuffle(x, self.shuffle_p, rng);
                }
                _ => unreachable!(),
            }
        }
        Ok(fired)
    }
}

/// Random stream for crop `index` of a run seeded with `seed`, independent
/// of the order in which crops are processed.
pub fn crop_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probability_is_bit_exact_identity() {
        let x = Array2::from_shape_fn((21, 700), |(c, t)| (c * 700 + t) as f32 * 1e-3);
        let mut y = x.clone();
        let fired = AugmentPolicy::disabled()
            .apply(&mut y, &mut crop_rng(1, 2))
            .unwrap();
        assert_eq!(fired, [false; 6]);
        assert_eq!(y, x);
    }

    #[test]
    fn streams_differ_per_crop_and_repeat_per_seed() {
        let draw = |s, i| crop_rng(s, i).random::<u64>();
        assert_eq!(draw(5, 9), draw(5, 9));
        assert_ne!(draw(5, 9), draw(5, 10));
        assert_ne!(draw(5, 9), draw(6, 9));
    }

    #[test]
    fn default_policy_validates() {
        AugmentPolicy::default().validate().unwrap();
        let bad = AugmentPolicy {
            bandstop_max_hz: 49.8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
