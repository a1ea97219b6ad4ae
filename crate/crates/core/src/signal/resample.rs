//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc low-pass.

use crate::error::{Error, Result};

const STOPBAND_DB: f64 = 60.0;
const CUTOFF_FRACTION: f64 = 0.45;
// Rates are matched to this resolution before reducing the ratio.
const RATE_QUANTUM: f64 = 1e-3;
const MAX_FACTOR: u64 = 4096;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[derive(Clone, Debug)]
pub struct Resampler {
    up: usize,
    down: usize,
    taps: Vec<f64>,
}

impl Resampler {
    /// Resampler from `from_hz` to `to_hz`. The anti-alias cutoff sits at
    /// 0.45 of the lower of the two rates.
    pub fn new(from_hz: f64, to_hz: f64) -> Result<Self> {
        for r in [from_hz, to_hz] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "sample rate {r} is not positive"
                )));
            }
        }
        let a = (from_hz / RATE_QUANTUM).round() as u64;
        let b = (to_hz / RATE_QUANTUM).round() as u64;
        let g = gcd(a, b);
        let (up, down) = (b / g, a / g);
        if up > MAX_FACTOR || down > MAX_FACTOR {
            return Err(Error::InvalidInput(format!(
                "resampling ratio {to_hz}/{from_hz} reduces to {up}/{down}, too fine"
            )));
        }
        if up == down {
            return Ok(Self {
                up: 1,
                down: 1,
                taps: vec![1.0],
            });
        }
        let fs = from_hz * up as f64;
        let low = from_hz.min(to_hz);
        let cutoff = CUTOFF_FRACTION * low;
        let transition = 2.0 * (0.5 * low - cutoff);
        let beta = 0.1102 * (STOPBAND_DB - 8.7);
        let omega = 2.0 * std::f64::consts::PI * transition / fs;
        let mut n = ((STOPBAND_DB - 7.95) / (2.285 * omega)).ceil() as usize + 1;
        if n.is_multiple_of(2) {
            n += 1;
        }
        let m = (n - 1) as f64 / 2.0;
        let fc = 2.0 * cutoff / fs;
        let norm = bessel_i0(beta);
        let taps = (0..n)
            .map(|i| {
                let r = (i as f64 - m) / m;
                let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
                fc * sinc(fc * (i as f64 - m)) * w
            })
            .collect();
        Ok(Self {
            up: up as usize,
            down: down as usize,
            taps,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.up == self.down
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, n_in: usize) -> usize {
        n_in * self.up / self.down
    }

    /// Each output sample is normalized by the sum of the taps it used, so a
    /// constant input maps to the same constant everywhere, edges included.
    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        if self.is_identity() {
            return x.to_vec();
        }
        let n_in = x.len();
        let n_taps = self.taps.len();
        let centre = (n_taps - 1) / 2;
        let mut out = Vec::with_capacity(self.output_len(n_in));
        for o in 0..self.output_len(n_in) {
            // Upsampled index shifted so that tap index = c - j * up.
            let c = o * self.down + centre;
            let j_hi = (c / self.up).min(n_in.saturating_sub(1));
            let j_lo = (c + 1).saturating_sub(n_taps).div_ceil(self.up);
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (j, &xj) in x.iter().enumerate().take(j_hi + 1).skip(j_lo) {
                let h = self.taps[c - j * self.up];
                acc += h * xj as f64;
                weight += h;
            }
            out.push(if weight.abs() > 1e-12 {
                acc / weight
            } else {
                0.0
            } as f32);
        }
        out
    }
}
