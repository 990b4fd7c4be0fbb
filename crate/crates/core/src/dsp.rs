//! Small shared DSP helpers: windows, windowed-sinc FIR design, filtering,
//! frequency translation and power bookkeeping.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Hamming,
    Blackman,
}

impl Window {
    /// Symmetric window of length `n` (filter design).
    pub fn symmetric(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let m = (n - 1) as f64;
        (0..n).map(|i| self.eval(i as f64 / m)).collect()
    }

    /// Periodic window of length `n` (spectral analysis).
    pub fn periodic(self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.eval(i as f64 / n as f64)).collect()
    }

    fn eval(self, x: f64) -> f64 {
        let c = (2.0 * PI * x).cos();
        match self {
            Window::Hann => 0.5 - 0.5 * c,
            Window::Hamming => 0.54 - 0.46 * c,
            Window::Blackman => 0.42 - 0.5 * c + 0.08 * (4.0 * PI * x).cos(),
        }
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Windowed-sinc low-pass with `order + 1` taps and unity DC gain.
pub fn lowpass_taps(order: usize, cutoff_hz: f64, fs: f64, window: Window) -> Vec<f64> {
    let n = order + 1;
    let fc = (cutoff_hz / fs).min(0.5);
    let mid = order as f64 / 2.0;
    let w = window.symmetric(n);
    let mut taps: Vec<f64> = (0..n)
        .map(|i| 2.0 * fc * sinc(2.0 * fc * (i as f64 - mid)) * w[i])
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

/// Magnitude response of a real FIR at `freq_hz`.
pub fn fir_response(taps: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let w = -2.0 * PI * freq_hz / fs;
    taps.iter()
        .enumerate()
        .map(|(k, &t)| Complex64::from_polar(t, w * k as f64))
        .sum::<Complex64>()
        .norm()
}

/// Convolve with a real FIR and drop the group delay so the output lines
/// up with the input and keeps its length.
pub fn filter_same(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let delay = (taps.len() - 1) / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let centre = i + delay;
            let k_lo = centre.saturating_sub(n - 1);
            let k_hi = centre.min(taps.len() - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in k_lo..=k_hi {
                acc += x[centre - k] * taps[k];
            }
            acc
        })
        .collect()
}

/// Multiply by `exp(j 2 pi freq n / fs)`.
pub fn mix(x: &[Complex64], freq_hz: f64, fs: f64) -> Vec<Complex64> {
    let w = 2.0 * PI * freq_hz / fs;
    x.iter()
        .enumerate()
        .map(|(n, &s)| s * Complex64::from_polar(1.0, w * n as f64))
        .collect()
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Scale in place to unit mean power. Returns the applied gain, or `None`
/// when the input carries no power.
pub fn normalize_power(x: &mut [Complex64]) -> Option<f64> {
    let p = mean_power(x);
    if !(p > 0.0) || !p.is_finite() {
        return None;
    }
    let g = 1.0 / p.sqrt();
    x.iter_mut().for_each(|s| *s *= g);
    Some(g)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.max(1e-300).log10()
}

/// Forward DFT (unnormalized).
pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Swap halves so that index 0 corresponds to `-fs/2`.
pub fn fftshift<T: Clone>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let half = n.div_ceil(2);
    x[half..].iter().chain(x[..half].iter()).cloned().collect()
}

/// Median of a non-empty slice (lower median for even lengths averaged with
/// the upper one).
pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
