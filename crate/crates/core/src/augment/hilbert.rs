use num_complex::Complex64;
use rustfft::FftPlanner;

/// Analytic signal of `x`, zero-padded to the next power of two for the FFT
/// and truncated back to `x.len()`.
pub fn analytic_signal(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let n = x.len();
    let n_fft = n.next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(n_fft).process(&mut buf);
    // Keep DC and Nyquist, double positive frequencies, drop negative ones.
    let half = n_fft / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n_fft.is_multiple_of(2) && k == half) {
            continue;
        }
        *v *= if k < n_fft.div_ceil(2) { 2.0 } else { 0.0 };
    }
    planner.plan_fft_inverse(n_fft).process(&mut buf);
    let scale = 1.0 / n_fft as f64;
    buf.truncate(n);
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}
