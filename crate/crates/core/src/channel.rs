//! Propagation impairments: tapped-delay-line Rayleigh / Rician fading with
//! sum-of-sinusoids Doppler, oscillator (clock) offset, in-band SNR
//! calibration and additive white Gaussian noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::{db_to_linear, mean_power, sinc};
use crate::{Error, Result};

/// Sinusoids per Rayleigh tap in the sum-of-sinusoids generator.
pub const SOS_SINUSOIDS: usize = 16;

/// Order of the windowed-sinc fractional-delay interpolator.
pub const FRACTIONAL_DELAY_ORDER: usize = 8;

/// Half-width, in samples, of the resampling kernel used for clock offset.
const RESAMPLE_HALF_WIDTH: isize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ChannelKind {
    AwgnOnly,
    Rayleigh,
    Rician,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::AwgnOnly => "AWGN_ONLY",
            ChannelKind::Rayleigh => "RAYLEIGH",
            ChannelKind::Rician => "RICIAN",
        }
    }
}

/// Delay profile used when none is given: three paths at 0, 180 and 340 ns
/// with average gains 0, -2 and -10 dB.
pub const DEFAULT_PATH_DELAYS_S: [f64; 3] = [0.0, 1.8e-7, 3.4e-7];
pub const DEFAULT_PATH_GAINS_DB: [f64; 3] = [0.0, -2.0, -10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub path_delays: Vec<f64>,
    pub path_gains_db: Vec<f64>,
    /// Rician line-of-sight to diffuse power ratio (linear). Ignored unless
    /// `kind` is `Rician`.
    pub k_factor: f64,
    pub max_doppler: f64,
    pub clock_offset_ppm: f64,
}

impl ChannelSpec {
    pub fn awgn() -> Self {
        ChannelSpec {
            kind: ChannelKind::AwgnOnly,
            path_delays: DEFAULT_PATH_DELAYS_S.to_vec(),
            path_gains_db: DEFAULT_PATH_GAINS_DB.to_vec(),
            k_factor: 0.0,
            max_doppler: 0.0,
            clock_offset_ppm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_delays.is_empty() || self.path_delays.len() != self.path_gains_db.len() {
            return Err(Error::Param(format!(
                "{} path delays vs {} path gains (need equal, non-zero counts)",
                self.path_delays.len(),
                self.path_gains_db.len()
            )));
        }
        if self.path_delays[0] < 0.0 || self.path_delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Param(
                "path delays must be non-negative and strictly increasing".into(),
            ));
        }
        if self.path_gains_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Param("path gains must be finite".into()));
        }
        if self.kind == ChannelKind::Rician && !(self.k_factor >= 0.0) {
            return Err(Error::Param(format!("k_factor {} must be >= 0", self.k_factor)));
        }
        if !(self.max_doppler >= 0.0) {
            return Err(Error::Param(format!("max_doppler {} must be >= 0", self.max_doppler)));
        }
        if !(self.clock_offset_ppm >= 0.0) {
            return Err(Error::Param(format!(
                "clock_offset_ppm {} must be >= 0",
                self.clock_offset_ppm
            )));
        }
        Ok(())
    }

    /// Linear path powers scaled to sum to one.
    pub fn normalized_path_powers(&self) -> Vec<f64> {
        let p: Vec<f64> = self.path_gains_db.iter().map(|&g| db_to_linear(g)).collect();
        let total: f64 = p.iter().sum();
        p.into_iter().map(|x| x / total).collect()
    }
}

/// Variance of the complex noise samples `w[l]`. Zero means noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub noise_power: f64,
}

impl NoiseSpec {
    pub fn new(noise_power: f64) -> Result<Self> {
        if !(noise_power >= 0.0) || !noise_power.is_finite() {
            return Err(Error::Param(format!("noise power {noise_power} must be finite and >= 0")));
        }
        Ok(NoiseSpec { noise_power })
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise_power == 0.0
    }
}

/// Fractional-delay FIR for a delay of `delay` samples. Returns the integer
/// offset of the first tap and the taps; `y[n] = sum_k taps[k] x[n - start - k]`.
pub fn fractional_delay_taps(delay: f64) -> (isize, Vec<f64>) {
    let half = (FRACTIONAL_DELAY_ORDER / 2) as isize;
    let whole = delay.floor();
    let mu = delay - whole;
    if mu == 0.0 {
        let mut taps = vec![0.0; FRACTIONAL_DELAY_ORDER + 1];
        taps[half as usize] = 1.0;
        return (whole as isize - half, taps);
    }
    let width = half as f64 + 1.0;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| {
            let u = k as f64 - mu;
            let w = if u.abs() < width { 0.5 * (1.0 + (PI * u / width).cos()) } else { 0.0 };
            sinc(u) * w
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    (whole as isize - half, taps)
}

fn delayed(x: &[Complex64], delay: f64) -> Vec<Complex64> {
    let (start, taps) = fractional_delay_taps(delay);
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &t) in taps.iter().enumerate() {
                let j = i - start - k as isize;
                if (0..n).contains(&j) {
                    acc += x[j as usize] * t;
                }
            }
            acc
        })
        .collect()
}

/// Unit-power fading process for one path, evaluated at `len` samples.
struct SosTap {
    phasors: Vec<Complex64>,
    rotations: Vec<Complex64>,
    scale: f64,
}

impl SosTap {
    fn rayleigh<R: Rng + ?Sized>(max_doppler: f64, fs: f64, rng: &mut R) -> Self {
        let mut phasors = Vec::with_capacity(SOS_SINUSOIDS);
        let mut rotations = Vec::with_capacity(SOS_SINUSOIDS);
        for _ in 0..SOS_SINUSOIDS {
            let angle = rng.gen::<f64>() * 2.0 * PI;
            let phase = rng.gen::<f64>() * 2.0 * PI;
            phasors.push(Complex64::from_polar(1.0, phase));
            rotations.push(Complex64::from_polar(1.0, 2.0 * PI * max_doppler * angle.cos() / fs));
        }
        SosTap {
            phasors,
            rotations,
            scale: (SOS_SINUSOIDS as f64).sqrt().recip(),
        }
    }

    fn line_of_sight<R: Rng + ?Sized>(max_doppler: f64, fs: f64, rng: &mut R) -> Self {
        let angle = rng.gen::<f64>() * 2.0 * PI;
        let phase = rng.gen::<f64>() * 2.0 * PI;
        SosTap {
            phasors: vec![Complex64::from_polar(1.0, phase)],
            rotations: vec![Complex64::from_polar(1.0, 2.0 * PI * max_doppler * angle.cos() / fs)],
            scale: 1.0,
        }
    }

    fn samples(&self, len: usize) -> Vec<Complex64> {
        let mut ph = self.phasors.clone();
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(ph.iter().sum::<Complex64>() * self.scale);
            for (p, r) in ph.iter_mut().zip(&self.rotations) {
                *p *= r;
            }
        }
        out
    }
}

/// Pass `x` through a time-varying tapped delay line.
pub fn apply_multipath<R: Rng + ?Sized>(
    x: &[Complex64],
    spec: &ChannelSpec,
    fs: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if spec.kind == ChannelKind::AwgnOnly {
        return Err(Error::Contract(
            "apply_multipath called with an AWGN_ONLY channel".into(),
        ));
    }
    spec.validate()?;
    let powers = spec.normalized_path_powers();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for (p, (&delay_s, &power)) in spec.path_delays.iter().zip(&powers).enumerate() {
        let mut tap = SosTap::rayleigh(spec.max_doppler, fs, rng).samples(x.len());
        if p == 0 && spec.kind == ChannelKind::Rician {
            let k = spec.k_factor;
            let los = SosTap::line_of_sight(spec.max_doppler, fs, rng).samples(x.len());
            let (a_los, a_diffuse) = ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt());
            for (t, l) in tap.iter_mut().zip(los) {
                *t = l * a_los + *t * a_diffuse;
            }
        }
        let path = delayed(x, delay_s * fs);
        let amp = power.sqrt();
        for ((y, s), h) in out.iter_mut().zip(path).zip(tap) {
            *y += s * h * amp;
        }
    }
    Ok(out)
}

/// Oscillator offset of `ppm` parts per million: a carrier shift of
/// `carrier * ppm * 1e-6` Hz followed by resampling at rate `1 + ppm * 1e-6`.
/// The output keeps the input length.
pub fn apply_clock_offset(x: &[Complex64], ppm: f64, carrier: f64, fs: f64) -> Vec<Complex64> {
    if ppm == 0.0 {
        return x.to_vec();
    }
    let ratio = 1.0 + ppm * 1e-6;
    let shifted = crate::dsp::mix(x, carrier_shift(carrier, ppm), fs);
    let n = x.len() as isize;
    let width = RESAMPLE_HALF_WIDTH as f64 + 1.0;
    // Raised-cosine step between adjacent taps, applied by rotation so only
    // one sin/cos pair is evaluated per output sample.
    let step = Complex64::from_polar(1.0, -PI / width);
    (0..n)
        .map(|i| {
            let t = i as f64 * ratio;
            let base = t.floor() as isize;
            let mu = t - base as f64;
            let k0 = 1 - RESAMPLE_HALF_WIDTH;
            let sin_mu = (PI * mu).sin();
            let mut rot = Complex64::from_polar(1.0, PI * (mu - k0 as f64) / width);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in k0..=RESAMPLE_HALF_WIDTH {
                let j = base + k;
                if (0..n).contains(&j) {
                    let u = mu - k as f64;
                    // sin(pi (mu - k)) = (-1)^k sin(pi mu)
                    let sinc_u = if u == 0.0 {
                        1.0
                    } else {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        sign * sin_mu / (PI * u)
                    };
                    acc += shifted[j as usize] * (sinc_u * 0.5 * (1.0 + rot.re));
                }
                rot *= step;
            }
            acc
        })
        .collect()
}

/// Carrier frequency error in Hz for a given oscillator offset.
pub fn carrier_shift(carrier: f64, ppm: f64) -> f64 {
    carrier * ppm * 1e-6
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSignal {
    pub samples: Vec<Complex64>,
    pub gain: f64,
}

/// Scale `x` so that its power over the in-band noise power
/// `noise_power * occupied_bw / fs` equals `target_snr_db`. In noiseless
/// mode the signal is returned unchanged with unit gain.
pub fn scale_to_snr(
    x: &[Complex64],
    target_snr_db: f64,
    noise: NoiseSpec,
    occupied_bw: f64,
    fs: f64,
) -> Result<ScaledSignal> {
    let p = mean_power(x);
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Degenerate("cannot scale a zero-power signal to an SNR".into()));
    }
    if noise.is_noiseless() {
        return Ok(ScaledSignal {
            samples: x.to_vec(),
            gain: 1.0,
        });
    }
    if !(occupied_bw > 0.0) {
        return Err(Error::Param(format!("occupied bandwidth {occupied_bw} must be positive")));
    }
    let in_band_noise = noise.noise_power * occupied_bw / fs;
    let gain = (db_to_linear(target_snr_db) * in_band_noise / p).sqrt();
    Ok(ScaledSignal {
        samples: x.iter().map(|s| s * gain).collect(),
        gain,
    })
}

/// Circular complex Gaussian noise samples with total variance `noise_power`.
pub fn awgn<R: Rng + ?Sized>(len: usize, noise: NoiseSpec, rng: &mut R) -> Vec<Complex64> {
    let sigma = (noise.noise_power / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * sigma
        })
        .collect()
}

pub fn add_awgn<R: Rng + ?Sized>(x: &[Complex64], noise: NoiseSpec, rng: &mut R) -> Vec<Complex64> {
    if noise.is_noiseless() {
        return x.to_vec();
    }
    let w = awgn(x.len(), noise, rng);
    x.iter().zip(w).map(|(s, n)| s + n).collect()
}
