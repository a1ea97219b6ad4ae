use eegxfer::signal::montage::standard_montage;
use eegxfer::signal::{
    parse_edf, preprocess, split_train_valid, write_edf, Label, PreprocessConfig, Recording,
    RecordingMeta, Resampler,
};
use ndarray::Array2;
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn sine(rate: f64, freq: f64, n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin() as f32)
        .collect()
}

fn peak_hz(x: &[f32], rate: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    let half = buf.len() / 2;
    let k = (1..half)
        .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
        .unwrap();
    k as f64 * rate / buf.len() as f64
}

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn resampled_sinusoid_keeps_its_frequency() {
    for from in [200.0, 250.0, 256.0, 500.0] {
        let r = Resampler::new(from, 100.0).unwrap();
        for f in [1.5, 7.0, 17.3, 33.0, 40.0] {
            let y = r.apply(&sine(from, f, (from * 60.0) as usize));
            let p = peak_hz(&y, 100.0);
            assert!(
                (p - f).abs() <= 0.1,
                "{from} Hz input, {f} Hz tone peaks at {p}"
            );
        }
    }
}

#[test]
fn content_above_target_nyquist_is_suppressed() {
    for from in [200.0f64, 256.0, 500.0] {
        let r = Resampler::new(from, 100.0).unwrap();
        let mut f = 50.5;
        while f < from / 2.0 {
            let x = sine(from, f, (from * 30.0) as usize);
            let y = r.apply(&x);
            // Skip the filter edges, where the kernel is truncated.
            let inner = &y[200..y.len() - 200];
            let ratio_db = 20.0 * (rms(inner) / rms(&x)).log10();
            assert!(
                ratio_db <= -40.0,
                "{from} Hz input, {f} Hz tone: {ratio_db:.1} dB"
            );
            f += 7.3;
        }
    }
}

#[test]
fn stratification_arithmetic_exhaustive() {
    let mk = |n0: usize, n1: usize| -> Vec<Recording> {
        (0..n0 + n1)
            .map(|i| {
                let l = if i < n0 {
                    Label::Normal
                } else {
                    Label::Abnormal
                };
                Recording::new(
                    RecordingMeta::new(format!("{i}"), l),
                    vec!["Cz".into()],
                    Array2::zeros((1, 2)),
                    100.0,
                )
                .unwrap()
            })
            .collect()
    };
    for n0 in 0..=25 {
        for n1 in 0..=25 {
            for ratio in [0.5, 0.7, 0.85, 0.9] {
                let n = n0 + n1;
                let n_train = (ratio * n as f64).round() as usize;
                let res = split_train_valid(mk(n0, n1), ratio, 11);
                if n == 0 || n_train == 0 || n_train == n {
                    assert!(res.is_err());
                    continue;
                }
                let (t, v) = res.unwrap();
                assert_eq!(t.len(), n_train);
                assert_eq!(t.len() + v.len(), n);
                for (l, nc) in [(Label::Normal, n0), (Label::Abnormal, n1)] {
                    let got = t.iter().filter(|r| r.label() == l).count() as f64;
                    assert!(
                        (got - ratio * nc as f64).abs() < 1.0 + 1e-9,
                        "{n0}/{n1} at {ratio}"
                    );
                }
            }
        }
    }
}

fn random_recording(seed: u64, rate: f64, seconds: usize, amp: f32) -> Recording {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rate as usize * seconds;
    let data = Array2::from_shape_fn((21, n), |_| rng.random_range(-amp..amp));
    Recording::new(
        RecordingMeta::new("p", Label::Normal),
        standard_montage(),
        data,
        rate,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn edf_round_trip_within_quantization(seed in 0u64..1000, amp in 1.0f32..2000.0) {
        let rec = random_recording(seed, 50.0, 2, amp);
        let (bytes, header) = write_edf(&rec).unwrap();
        let (back, parsed) = parse_edf(&bytes, rec.meta.clone(), &standard_montage()).unwrap();
        prop_assert_eq!(&parsed, &header);
        for (c, s) in header.signals.iter().enumerate() {
            let step = (s.physical_max - s.physical_min) / (s.digital_max - s.digital_min) as f64;
            for (a, b) in back.data.row(c).iter().zip(rec.data.row(c)) {
                prop_assert!(((a - b) as f64).abs() <= step / 2.0 + 1e-3 * step.max(1.0));
            }
        }
    }

    #[test]
    fn preprocess_output_in_unit_range(seed in 0u64..1000, amp in 0.1f32..5000.0) {
        let rec = random_recording(seed, 200.0, 70, amp);
        let out = preprocess(&rec, &PreprocessConfig::default()).unwrap();
        prop_assert_eq!(out.data.dim(), (21, 1000));
        prop_assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        // Re-running on normalized data stays in range too.
        let cfg = PreprocessConfig { drop_first_s: 0.0, ..Default::default() };
        let mut again = out.clone();
        again.sample_rate_hz = 100.0;
        let twice = preprocess(&again, &cfg).unwrap();
        prop_assert!(twice.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
