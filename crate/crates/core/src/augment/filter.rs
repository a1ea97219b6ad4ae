//! Butterworth band-stop design and zero-phase second-order-section filtering.

use num_complex::Complex64;

/// One biquad, `a0` normalized to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2)
            / (self.a[0] + self.a[1] * z1 + self.a[2] * z2)
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// Digital Butterworth band-stop of prototype order `order` (even), between
/// `low_hz` and `high_hz`, as `order` biquads with unit DC gain.
pub fn butter_bandstop(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Vec<Biquad> {
    assert!(
        order >= 2 && order.is_multiple_of(2),
        "even prototype order expected"
    );
    assert!(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0);
    let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let omega0 = 2.0 * (w0 / (2.0 * fs)).atan();
    let bilinear = |s: Complex64| (2.0 * fs + s) / (2.0 * fs - s);

    let mut sections = Vec::with_capacity(order);
    for k in 1..=order / 2 {
        // Upper-half-plane low-pass prototype pole.
        let theta = std::f64::consts::PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        // Band-stop poles: roots of s^2 - (bw / p) s + w0^2.
        let c = bw / p;
        let disc = (c * c - 4.0 * w0 * w0).sqrt();
        for s in [(c + disc) / 2.0, (c - disc) / 2.0] {
            let z = bilinear(s);
            let mut q = Biquad {
                b: [1.0, -2.0 * omega0.cos(), 1.0],
                a: [1.0, -2.0 * z.re, z.norm_sqr()],
            };
            let g = q.dc_gain();
            q.b.iter_mut().for_each(|v| *v /= g);
            sections.push(q);
        }
    }
    sections
}

fn filter_section(q: &Biquad, x: &mut [f64], zi: [f64; 2]) {
    let [b0, b1, b2] = q.b;
    let [_, a1, a2] = q.a;
    let (mut z1, mut z2) = (zi[0], zi[1]);
    for v in x.iter_mut() {
        let xin = *v;
        let y = b0 * xin + z1;
        z1 = b1 * xin - a1 * y + z2;
        z2 = b2 * xin - a2 * y;
        *v = y;
    }
}

/// Steady-state section state for a unit step input.
fn step_state(q: &Biquad) -> [f64; 2] {
    let g = q.dc_gain();
    [g - q.b[0], q.b[2] - q.a[2] * g]
}

fn cascade(sections: &[Biquad], x: &mut [f64]) {
    let x0 = x[0];
    let mut level = x0;
    for q in sections {
        let s = step_state(q);
        filter_section(q, x, [s[0] * level, s[1] * level]);
        level *= q.dc_gain();
    }
}

/// Forward-backward filtering with odd-extension padding and step-matched
/// initial state, so the result has zero phase and constant inputs pass
/// through unchanged.
pub fn filtfilt(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let pad = (3 * (2 * sections.len() + 1)).min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    cascade(sections, &mut ext);
    ext.reverse();
    cascade(sections, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_db(sections: &[Biquad], f: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        let mag: f64 = sections.iter().map(|q| q.response(w).norm()).product();
        20.0 * mag.log10()
    }

    #[test]
    fn response_shape() {
        let fs = 100.0;
        let s = butter_bandstop(4, 9.5, 10.5, fs);
        assert_eq!(s.len(), 4);
        assert!(gain_db(&s, 10.0, fs) < -100.0);
        // Butterworth edges sit at -3 dB.
        for edge in [9.5, 10.5] {
            assert!(
                (gain_db(&s, edge, fs) + 3.0103).abs() < 0.01,
                "{}",
                gain_db(&s, edge, fs)
            );
        }
        assert!(gain_db(&s, 0.0, fs).abs() < 1e-9);
        assert!(gain_db(&s, 12.0, fs) > -0.5);
        assert!(gain_db(&s, 8.0, fs) > -0.5);
    }

    #[test]
    fn sections_are_stable() {
        for c in [2.0, 10.0, 30.0, 45.0] {
            for q in butter_bandstop(4, c - 0.5, c + 0.5, 100.0) {
                assert!(q.a[2] < 1.0 && q.a[2] > 0.0);
            }
        }
    }

    #[test]
    fn constant_passes_unchanged() {
        let s = butter_bandstop(4, 19.5, 20.5, 100.0);
        let y = filtfilt(&s, &vec![2.5; 400]);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-9));
    }
}
