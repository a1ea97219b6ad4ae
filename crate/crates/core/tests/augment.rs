use eegxfer::augment::transforms::{
    bandstop_filter, channels_dropout, channels_shuffle, frequency_shift, smooth_time_mask,
};
use eegxfer::augment::{crop_rng, AugmentPolicy, TRANSFORM_NAMES};
use eegxfer::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

const FS: f64 = 100.0;

fn sine(channels: usize, n: usize, hz: f64) -> Array2<f32> {
    Array2::from_shape_fn((channels, n), |(c, t)| {
        (2.0 * std::f64::consts::PI * hz * t as f64 / FS + c as f64 * 0.3).sin() as f32
    })
}

fn random_crop(channels: usize, n: usize, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((channels, n), |_| rng.random_range(-1.0f32..1.0))
}

/// Frequency of the largest FFT bin, zero-padded to `8 n` for resolution.
fn peak_hz(x: &[f32]) -> f64 {
    let n = x.len() * 8;
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = (1..n / 2)
        .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
        .unwrap();
    k as f64 * FS / n as f64
}

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn only(i: usize, p: f64) -> AugmentPolicy {
    let mut pol = AugmentPolicy {
        apply_probability: p,
        ..Default::default()
    };
    let flags = [
        &mut pol.sign_flip,
        &mut pol.channels_dropout,
        &mut pol.frequency_shift,
        &mut pol.smooth_time_mask,
        &mut pol.bandstop_filter,
        &mut pol.channels_shuffle,
    ];
    for (j, f) in flags.into_iter().enumerate() {
        *f = i == j;
    }
    pol
}

#[test]
fn each_transform_triggers_at_the_configured_rate() {
    // Binomial(10000, 0.1) has sd 0.003, so +-0.01 is over three sd.
    let policy = AugmentPolicy::default();
    let base = random_crop(21, 650, 1);
    let mut counts = [0usize; 6];
    for i in 0..10_000u64 {
        let mut x = base.clone();
        let fired = policy.apply(&mut x, &mut crop_rng(7, i)).unwrap();
        assert_eq!(x.dim(), (21, 650));
        for (c, f) in counts.iter_mut().zip(fired) {
            *c += f as usize;
        }
    }
    for (name, c) in TRANSFORM_NAMES.iter().zip(counts) {
        let rate = c as f64 / 10_000.0;
        assert!((rate - 0.1).abs() < 0.01, "{name}: {rate}");
    }
}

#[test]
fn triggered_sign_flip_negates_exactly() {
    let x = random_crop(21, 650, 2);
    let mut y = x.clone();
    let fired = only(0, 1.0).apply(&mut y, &mut crop_rng(0, 0)).unwrap();
    assert!(fired[0]);
    assert_eq!(y, -&x);
}

#[test]
fn dropout_fraction_and_zero_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut dropped = 0usize;
    let draws = 10_000;
    for _ in 0..draws {
        let mut x = sine(1, 8, 5.0);
        let mask = channels_dropout(&mut x, 0.2, &mut rng);
        if mask[0] {
            dropped += 1;
            assert!(x.iter().all(|&v| v == 0.0));
        }
    }
    let frac = dropped as f64 / draws as f64;
    assert!((frac - 0.2).abs() < 0.02, "{frac}");
}

#[test]
fn frequency_shift_moves_the_peak_by_the_drawn_amount() {
    let x = sine(1, 1000, 10.0);
    let mut y = x.clone();
    frequency_shift(&mut y, 2.0, FS).unwrap();
    let peak = peak_hz(y.row(0).as_slice().unwrap());
    assert!((peak - 12.0).abs() < 0.2, "{peak}");

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let df = rng.random_range(-2.0..=2.0);
        let mut y = x.clone();
        frequency_shift(&mut y, df, FS).unwrap();
        let peak = peak_hz(y.row(0).as_slice().unwrap());
        assert!((peak - 10.0 - df).abs() < 0.2, "df {df}: peak {peak}");
    }
}

#[test]
fn frequency_shift_preserves_energy_of_band_limited_input() {
    let x = sine(4, 1024, 10.0) + sine(4, 1024, 23.0) * 0.5;
    for df in [-2.0, -0.7, 1.3, 2.0] {
        let mut y = x.clone();
        frequency_shift(&mut y, df, FS).unwrap();
        let (ex, ey) = (x.mapv(|v| v * v).sum(), y.mapv(|v| v * v).sum());
        assert!(((ey - ex) / ex).abs() < 0.01, "df {df}: {ex} -> {ey}");
    }
}

#[test]
fn pipeline_draws_shifts_within_two_hz() {
    // The drawn shift is recoverable from the peak of a pure tone.
    let x = sine(1, 1000, 10.0);
    let policy = only(2, 1.0);
    for i in 0..30 {
        let mut y = x.clone();
        policy.apply(&mut y, &mut crop_rng(5, i)).unwrap();
        let peak = peak_hz(y.row(0).as_slice().unwrap());
        assert!((peak - 10.0).abs() <= 2.0 + 0.2, "{peak}");
    }
}

#[test]
fn smooth_mask_attenuates_center_and_keeps_far_samples() {
    let x = Array2::from_elem((3, 2200), 1.0f32);
    let mut y = x.clone();
    smooth_time_mask(&mut y, 500, 600).unwrap();
    assert!(y[[0, 800]].abs() < 0.01);
    // 20 ramp widths from the window the logistic tail is below 1e-8
    for t in (0..100).chain(1500..2200) {
        assert!((y[[1, t]] - 1.0).abs() < 1e-6, "{t}");
    }
    let mut short = Array2::zeros((2, 599));
    assert!(matches!(
        smooth_time_mask(&mut short, 0, 600),
        Err(Error::CropTooShort { .. })
    ));
    assert!(matches!(
        only(3, 1.0).apply(&mut short, &mut crop_rng(0, 0)),
        Err(Error::CropTooShort { .. })
    ));
}

#[test]
fn mask_window_stays_inside_the_crop() {
    // A constant crop reveals the mask; its minimum must lie in the window.
    let policy = only(3, 1.0);
    for i in 0..200 {
        let mut y = Array2::from_elem((1, 700), 1.0f32);
        policy.apply(&mut y, &mut crop_rng(9, i)).unwrap();
        let (argmin, min) =
            y.iter()
                .enumerate()
                .fold((0, f32::MAX), |a, (t, &v)| if v < a.1 { (t, v) } else { a });
        assert!(min < 0.01);
        assert!((300..=400).contains(&argmin), "{argmin}");
    }
}

#[test]
fn bandstop_notches_the_centre_and_passes_distant_tones() {
    let edge = 100;
    for center in [2.0, 7.3, 20.0, 33.1, 45.0] {
        let x = sine(1, 3000, center);
        let mut y = x.clone();
        bandstop_filter(&mut y, center, 1.0, FS).unwrap();
        let r_in = rms(&x.as_slice().unwrap()[edge..3000 - edge]);
        let r_out = rms(&y.as_slice().unwrap()[edge..3000 - edge]);
        assert!(r_out < 0.1 * r_in, "{center} Hz: {r_out} vs {r_in}");

        let far = if center + 10.0 < 49.0 {
            center + 10.0
        } else {
            center - 10.0
        };
        let x = sine(1, 3000, far);
        let mut y = x.clone();
        bandstop_filter(&mut y, center, 1.0, FS).unwrap();
        let r_in = rms(&x.as_slice().unwrap()[edge..3000 - edge]);
        let r_out = rms(&y.as_slice().unwrap()[edge..3000 - edge]);
        assert!(
            (r_out / r_in - 1.0).abs() < 0.05,
            "{center} Hz / {far} Hz: {r_out} vs {r_in}"
        );
    }
}

#[test]
fn bandstop_leaves_dc_unchanged() {
    let mut y = Array2::from_elem((2, 800), 0.7f32);
    bandstop_filter(&mut y, 10.0, 1.0, FS).unwrap();
    assert!(y.iter().all(|&v| (v - 0.7).abs() < 1e-4));
}

#[test]
fn shuffle_moves_channels_at_the_expected_rate() {
    // Given k selected channels, a uniform permutation leaves one fixed
    // point on average, so E[moved] = 21 * 0.2 - P(k >= 1).
    let expected = 21.0 * 0.2 - (1.0 - 0.8f64.powi(21));
    assert!((expected - 3.2092).abs() < 1e-4);
    let x = Array2::from_shape_fn((21, 4), |(c, t)| (c * 4 + t) as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut moved = 0usize;
    let trials = 10_000;
    for _ in 0..trials {
        let mut y = x.clone();
        let src = channels_shuffle(&mut y, 0.2, &mut rng);
        moved += src.iter().enumerate().filter(|(i, s)| i != *s).count();
    }
    let mean = moved as f64 / trials as f64;
    // sd of a single draw is below 3, so the standard error is under 0.03
    assert!((mean - expected).abs() < 0.1, "{mean} vs {expected}");
}

fn sorted_rows(x: &Array2<f32>) -> Vec<Vec<u32>> {
    let mut rows: Vec<Vec<u32>> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shuffle_preserves_the_row_multiset(seed in 0u64..10_000, p in 0.0f64..=1.0) {
        let x = random_crop(21, 16, seed);
        let mut y = x.clone();
        let src = channels_shuffle(&mut y, p, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(sorted_rows(&x), sorted_rows(&y));
        for (dst, s) in src.iter().enumerate() {
            prop_assert_eq!(y.row(dst), x.row(*s));
        }
    }

    #[test]
    fn pipeline_preserves_shape_and_is_seeded(seed in 0u64..1000, index in 0u64..1000, w in 600usize..700) {
        let policy = AugmentPolicy { apply_probability: 0.5, ..Default::default() };
        let x = random_crop(21, w, seed ^ index);
        let mut a = x.clone();
        let mut b = x.clone();
        let fa = policy.apply(&mut a, &mut crop_rng(seed, index)).unwrap();
        let fb = policy.apply(&mut b, &mut crop_rng(seed, index)).unwrap();
        prop_assert_eq!(a.dim(), (21, w));
        prop_assert_eq!(fa, fb);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_probability_pipeline_is_identity(seed in 0u64..1000) {
        let x = random_crop(21, 650, seed);
        let mut y = x.clone();
        AugmentPolicy::disabled().apply(&mut y, &mut crop_rng(seed, 0)).unwrap();
        prop_assert_eq!(y, x);
    }
}
