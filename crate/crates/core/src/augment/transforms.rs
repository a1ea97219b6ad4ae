//! The six crop transforms as deterministic functions of their parameters.
//! Crops are `[channels, samples]`.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rustfft::FftPlanner;

use super::filter::{butter_bandstop, filtfilt};
use super::hilbert::analytic_signal;
use crate::error::{Error, Result};

/// Shortest crop accepted by [`frequency_shift`].
pub const MIN_SHIFT_LEN: usize = 64;
/// Width, in samples, of the logistic ramps at the mask edges.
pub const MASK_RAMP: f64 = 20.0;
/// Prototype order of the band-stop filter.
pub const BANDSTOP_ORDER: usize = 4;

pub fn sign_flip(x: &mut Array2<f32>) {
    x.mapv_inplace(|v| -v);
}

/// Zero each channel independently with probability `p`. Returns the mask of
/// dropped channels.
pub fn channels_dropout<R: Rng + ?Sized>(x: &mut Array2<f32>, p: f64, rng: &mut R) -> Vec<bool> {
    let dropped: Vec<bool> = (0..x.nrows()).map(|_| rng.random::<f64>() < p).collect();
    for (mut row, &d) in x.axis_iter_mut(Axis(0)).zip(&dropped) {
        if d {
            row.fill(0.0);
        }
    }
    dropped
}

/// Shift every frequency by `shift_hz`: real part of the analytic signal
/// times `exp(i 2π Δf t)`.
pub fn frequency_shift(x: &mut Array2<f32>, shift_hz: f64, fs: f64) -> Result<()> {
    let n = x.ncols();
    if n < MIN_SHIFT_LEN {
        return Err(Error::CropTooShort {
            transform: "frequency_shift",
            len: n,
            required: MIN_SHIFT_LEN,
        });
    }
    let mut planner = FftPlanner::new();
    let step = 2.0 * std::f64::consts::PI * shift_hz / fs;
    for mut row in x.axis_iter_mut(Axis(0)) {
        let v: Vec<f64> = row.iter().map(|&s| s as f64).collect();
        let z = analytic_signal(&v, &mut planner);
        for (t, (out, a)) in row.iter_mut().zip(z).enumerate() {
            let (s, c) = (step * t as f64).sin_cos();
            *out = (a.re * c - a.im * s) as f32;
        }
    }
    Ok(())
}

/// Multiplicative mask that is ~0 on `start..start + len` and ~1 elsewhere,
/// with logistic ramps of width [`MASK_RAMP`].
pub fn time_mask(n: usize, start: usize, len: usize) -> Vec<f64> {
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    let (a, b) = (start as f64, (start + len) as f64);
    (0..n)
        .map(|t| {
            let t = t as f64;
            sigmoid((a - t) / MASK_RAMP) + sigmoid((t - b) / MASK_RAMP)
        })
        .collect()
}

pub fn smooth_time_mask(x: &mut Array2<f32>, start: usize, len: usize) -> Result<()> {
    let n = x.ncols();
    if n < len || start + len > n {
        return Err(Error::CropTooShort {
            transform: "smooth_time_mask",
            len: n,
            required: start + len,
        });
    }
    let mask = time_mask(n, start, len);
    for mut row in x.axis_iter_mut(Axis(0)) {
        for (v, m) in row.iter_mut().zip(&mask) {
            *v = (*v as f64 * m) as f32;
        }
    }
    Ok(())
}

/// Zero-phase Butterworth band-stop of width `bandwidth_hz` centred at `center_hz`.
pub fn bandstop_filter(
    x: &mut Array2<f32>,
    center_hz: f64,
    bandwidth_hz: f64,
    fs: f64,
) -> Result<()> {
    let (lo, hi) = (
        center_hz - bandwidth_hz / 2.0,
        center_hz + bandwidth_hz / 2.0,
    );
    if !(lo > 0.0 && hi < fs / 2.0) {
        return Err(Error::InvalidConfig(format!(
            "stop band {lo}..{hi} Hz outside (0, {}) Hz",
            fs / 2.0
        )));
    }
    if x.ncols() < 2 {
        return Err(Error::CropTooShort {
            transform: "bandstop_filter",
            len: x.ncols(),
            required: 2,
        });
    }
    let sections = butter_bandstop(BANDSTOP_ORDER, lo, hi, fs);
    for mut row in x.axis_iter_mut(Axis(0)) {
        let v: Vec<f64> = row.iter().map(|&s| s as f64).collect();
        for (out, y) in row.iter_mut().zip(filtfilt(&sections, &v)) {
            *out = y as f32;
        }
    }
    Ok(())
}

/// Select each channel with probability `p` and permute the selected rows
/// among themselves. Returns the source row of every output row.
pub fn channels_shuffle<R: Rng + ?Sized>(x: &mut Array2<f32>, p: f64, rng: &mut R) -> Vec<usize> {
    let n = x.nrows();
    let selected: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < p).collect();
    let mut shuffled = selected.clone();
    shuffled.shuffle(rng);
    let mut source: Vec<usize> = (0..n).collect();
    for (&dst, &src) in selected.iter().zip(&shuffled) {
        source[dst] = src;
    }
    if source.iter().enumerate().any(|(i, &s)| i != s) {
        let orig = x.clone();
        for (dst, &src) in source.iter().enumerate() {
            x.row_mut(dst).assign(&orig.row(src));
        }
    }
    source
}
