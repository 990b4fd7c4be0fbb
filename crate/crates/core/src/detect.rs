//! Stage one: turn a capture into band proposals.
//!
//! Both detectors work on a Welch power spectral density. The energy
//! detector thresholds bins against a median noise floor and reports
//! contiguous runs; the matched-filter detector slides rectangular spectral
//! templates of the known bandwidth classes and keeps correlation peaks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, db_to_linear, linear_to_db, Window};
use crate::{Error, Result};

/// One-sided power spectral density, FFT-shifted so bin 0 sits at `-fs/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Power per Hz.
    pub psd: Vec<f64>,
    pub fs: f64,
}

impl Spectrum {
    pub fn n_bins(&self) -> usize {
        self.psd.len()
    }

    pub fn bin_hz(&self) -> f64 {
        self.fs / self.psd.len() as f64
    }

    pub fn bin_freq(&self, k: usize) -> f64 {
        -self.fs / 2.0 + k as f64 * self.bin_hz()
    }

    /// `sum(psd) * bin_hz`, the mean power the spectrum accounts for.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_hz()
    }
}

/// Detected band: interval `(center - bandwidth/2, center + bandwidth/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub center_freq: f64,
    pub bandwidth: f64,
    pub confidence: f64,
}

impl Proposal {
    pub fn low(&self) -> f64 {
        self.center_freq - self.bandwidth / 2.0
    }

    pub fn high(&self) -> f64 {
        self.center_freq + self.bandwidth / 2.0
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::Input(format!("proposal bandwidth {} must be > 0", self.bandwidth)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Input(format!("proposal confidence {} outside [0, 1]", self.confidence)));
        }
        let nyq = fs / 2.0 + 1e-6;
        if self.low() < -nyq || self.high() > nyq {
            return Err(Error::Input(format!(
                "proposal [{}, {}] Hz lies outside the Nyquist band +/-{} Hz",
                self.low(),
                self.high(),
                fs / 2.0
            )));
        }
        Ok(())
    }

    /// Shift the centre so the interval fits inside `[-fs/2, fs/2]`.
    fn clamped(mut self, fs: f64) -> Self {
        let half_band = fs / 2.0;
        self.bandwidth = self.bandwidth.min(fs);
        let half = self.bandwidth / 2.0;
        self.center_freq = self.center_freq.clamp(-half_band + half, half_band - half);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMethod {
    Energy,
    #[serde(rename = "mf")]
    MatchedFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub method: DetectorMethod,
    /// Level over the noise floor a band must clear, in dB.
    pub threshold_db: f64,
    pub merge_gap_bins: usize,
    pub min_run_bins: usize,
    /// An above-threshold run is cut at an interior valley at least this
    /// many dB below the lower of its two flanking peaks (0 disables).
    pub split_depth_db: f64,
    pub nms_iou: f64,
    /// Template widths for the matched filter, Hz.
    pub mf_bandwidths: Vec<f64>,
    /// Minimum template correlation for a matched-filter peak.
    pub mf_min_score: f64,
    pub segment: usize,
    pub hop: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            method: DetectorMethod::Energy,
            threshold_db: 6.0,
            merge_gap_bins: 3,
            min_run_bins: 8,
            split_depth_db: 10.0,
            nms_iou: 0.3,
            mf_bandwidths: crate::synth::GenConfig::default().class_bandwidths(),
            mf_min_score: 0.5,
            segment: 256,
            hop: 128,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_db > 0.0) {
            return Err(Error::Param(format!("threshold_db {} must be > 0", self.threshold_db)));
        }
        if !(self.split_depth_db >= 0.0) {
            return Err(Error::Param(format!("split_depth_db {} must be >= 0", self.split_depth_db)));
        }
        if !(0.0..1.0).contains(&self.nms_iou) {
            return Err(Error::Param(format!("nms_iou {} outside [0, 1)", self.nms_iou)));
        }
        if self.segment == 0 || self.hop == 0 {
            return Err(Error::Param("segment and hop must be positive".into()));
        }
        if self.method == DetectorMethod::MatchedFilter
            && (self.mf_bandwidths.is_empty() || self.mf_bandwidths.iter().any(|&b| !(b > 0.0)))
        {
            return Err(Error::Param("mf_bandwidths must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Hann-windowed averaged periodogram, normalized so the integral equals
/// the mean power of white input.
pub fn welch_psd(iq: &[Complex64], fs: f64, segment: usize, hop: usize) -> Result<Spectrum> {
    if segment == 0 || hop == 0 {
        return Err(Error::Param("segment and hop must be positive".into()));
    }
    if iq.len() < segment {
        return Err(Error::Input(format!(
            "{} samples is shorter than one {segment}-sample segment",
            iq.len()
        )));
    }
    let window = Window::Hann.periodic(segment);
    let u: f64 = window.iter().map(|w| w * w).sum();
    let n_seg = (iq.len() - segment) / hop + 1;
    let mut acc = vec![0.0; segment];
    for s in 0..n_seg {
        let frame: Vec<Complex64> = iq[s * hop..s * hop + segment]
            .iter()
            .zip(&window)
            .map(|(x, w)| x * w)
            .collect();
        for (a, x) in acc.iter_mut().zip(dsp::fft(&frame)) {
            *a += x.norm_sqr();
        }
    }
    let scale = 1.0 / (fs * u * n_seg as f64);
    let psd: Vec<f64> = acc.iter().map(|p| p * scale).collect();
    Ok(Spectrum {
        psd: dsp::fftshift(&psd),
        fs,
    })
}

/// Interval IoU on raw bounds. Zero when the union is empty.
pub fn interval_iou(a_low: f64, a_high: f64, b_low: f64, b_high: f64) -> f64 {
    let inter = (a_high.min(b_high) - a_low.max(b_low)).max(0.0);
    let union = (a_high - a_low) + (b_high - b_low) - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Intersection over union of two proposal intervals.
pub fn iou(a: &Proposal, b: &Proposal) -> Result<f64> {
    if !(a.bandwidth > 0.0) || !(b.bandwidth > 0.0) {
        return Err(Error::Input("IoU needs positive bandwidths".into()));
    }
    Ok(interval_iou(a.low(), a.high(), b.low(), b.high()))
}

fn confidence_order(a: &Proposal, b: &Proposal) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.center_freq.total_cmp(&b.center_freq))
}

/// Greedy non-maximum suppression.
pub fn nms(proposals: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut sorted = proposals.to_vec();
    sorted.sort_by(confidence_order);
    let mut kept: Vec<Proposal> = Vec::new();
    for p in sorted {
        if kept
            .iter()
            .all(|k| interval_iou(k.low(), k.high(), p.low(), p.high()) <= iou_threshold)
        {
            kept.push(p);
        }
    }
    kept
}

/// Threshold-judgment detector.
pub fn detect_energy(spec: &Spectrum, cfg: &DetectorConfig) -> Vec<Proposal> {
    let n = spec.n_bins();
    if n == 0 {
        return Vec::new();
    }
    let floor = dsp::median(&spec.psd).max(f64::MIN_POSITIVE);
    let level = floor * db_to_linear(cfg.threshold_db);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (k, &p) in spec.psd.iter().enumerate() {
        if p <= level {
            continue;
        }
        match runs.last_mut() {
            Some((_, end)) if k - *end - 1 < cfg.merge_gap_bins => *end = k,
            _ => runs.push((k, k)),
        }
    }
    let bin = spec.bin_hz();
    let mut pieces = Vec::new();
    for (s, e) in runs {
        if e - s + 1 >= cfg.min_run_bins {
            split_run(&spec.psd, s as f64 - 0.5, e as f64 + 0.5, cfg, &mut pieces);
        }
    }
    pieces
        .into_iter()
        .map(|(lo, hi)| {
            let s = (lo + 0.5).ceil() as usize;
            let e = ((hi - 0.5).floor() as usize).max(s);
            let bins = &spec.psd[s..=e];
            let weight: f64 = bins.iter().sum();
            let center = bins
                .iter()
                .enumerate()
                .map(|(i, p)| p * spec.bin_freq(s + i))
                .sum::<f64>()
                / weight;
            let excess = bins.iter().map(|&p| linear_to_db(p / floor)).sum::<f64>() / bins.len() as f64;
            Proposal {
                center_freq: center,
                bandwidth: (hi - lo) * bin,
                confidence: (excess / 30.0).clamp(0.0, 1.0),
            }
            .clamped(spec.fs)
        })
        .collect()
}

/// Recursively cut the run spanning bin edges `[lo, hi]` at its deepest
/// qualifying valley; both halves must keep `min_run_bins` bins.
fn split_run(psd: &[f64], lo: f64, hi: f64, cfg: &DetectorConfig, out: &mut Vec<(f64, f64)>) {
    let s = (lo + 0.5).ceil() as usize;
    let e = (hi - 0.5).floor() as usize;
    let min_run = cfg.min_run_bins.max(1);
    if cfg.split_depth_db <= 0.0 || e < s + 2 * min_run {
        out.push((lo, hi));
        return;
    }
    // 3-bin moving average in dB tames the periodogram variance.
    let smooth: Vec<f64> = (s..=e)
        .map(|k| {
            let a = k.saturating_sub(1).max(s);
            let b = (k + 1).min(e);
            linear_to_db(psd[a..=b].iter().sum::<f64>() / (b - a + 1) as f64)
        })
        .collect();
    let n = smooth.len();
    let mut left_max = smooth.clone();
    for i in 1..n {
        left_max[i] = left_max[i].max(left_max[i - 1]);
    }
    let mut right_max = smooth.clone();
    for i in (0..n - 1).rev() {
        right_max[i] = right_max[i].max(right_max[i + 1]);
    }
    let mut best: Option<(f64, usize)> = None;
    for i in min_run..n - min_run {
        let depth = left_max[i].min(right_max[i]) - smooth[i];
        if depth >= cfg.split_depth_db && best.is_none_or(|(d, _)| depth > d) {
            best = Some((depth, i));
        }
    }
    match best {
        Some((_, i)) => {
            let cut = (s + i) as f64;
            split_run(psd, lo, cut, cfg, out);
            split_run(psd, cut, hi, cfg, out);
        }
        None => out.push((lo, hi)),
    }
}

/// Pearson correlation of `window` with a rectangular template that is one
/// on `[guard, guard + width)` and zero on the guards, clipped to `[0, 1]`.
pub fn template_score(window: &[f64], width: usize, guard: usize) -> f64 {
    let n = window.len();
    debug_assert_eq!(n, width + 2 * guard);
    let t_mean = width as f64 / n as f64;
    let d_mean = window.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut dd = 0.0;
    let mut tt = 0.0;
    for (i, &d) in window.iter().enumerate() {
        let t = if (guard..guard + width).contains(&i) { 1.0 } else { 0.0 } - t_mean;
        let d = d - d_mean;
        num += d * t;
        dd += d * d;
        tt += t * t;
    }
    if dd <= 0.0 || tt <= 0.0 {
        return 0.0;
    }
    (num / (dd * tt).sqrt()).clamp(0.0, 1.0)
}

/// Template-correlation detector over the log spectrum.
pub fn detect_matched_filter(spec: &Spectrum, cfg: &DetectorConfig) -> Result<Vec<Proposal>> {
    if cfg.mf_bandwidths.is_empty() {
        return Err(Error::Param("matched filter needs at least one template bandwidth".into()));
    }
    let n = spec.n_bins();
    let bin = spec.bin_hz();
    let log: Vec<f64> = spec.psd.iter().map(|&p| linear_to_db(p)).collect();
    let floor_db = linear_to_db(dsp::median(&spec.psd));
    let mut candidates = Vec::new();
    for &bw in &cfg.mf_bandwidths {
        let width = ((bw / bin).round() as usize).max(1);
        let guard = (width / 4).max(2);
        let span = width + 2 * guard;
        if span > n {
            continue;
        }
        let scores: Vec<f64> = (0..=n - span)
            .map(|s| {
                let inner = &log[s + guard..s + guard + width];
                let excess = inner.iter().sum::<f64>() / width as f64 - floor_db;
                if excess < cfg.threshold_db {
                    0.0
                } else {
                    template_score(&log[s..s + span], width, guard)
                }
            })
            .collect();
        for (s, &score) in scores.iter().enumerate() {
            if score < cfg.mf_min_score || score <= 0.0 {
                continue;
            }
            let left = if s > 0 { scores[s - 1] } else { f64::NEG_INFINITY };
            let right = scores.get(s + 1).copied().unwrap_or(f64::NEG_INFINITY);
            if score > left && score >= right {
                let first = s + guard;
                let center = spec.bin_freq(first) + (width as f64 - 1.0) * bin / 2.0;
                candidates.push(
                    Proposal {
                        center_freq: center,
                        bandwidth: bw,
                        confidence: score,
                    }
                    .clamped(spec.fs),
                );
            }
        }
    }
    Ok(nms(&candidates, cfg.nms_iou))
}

/// A stage-one detector: capture in, proposals out.
pub trait Detector {
    fn detect(&self, iq: &[Complex64], fs: f64) -> Result<Vec<Proposal>>;
}

impl Detector for DetectorConfig {
    fn detect(&self, iq: &[Complex64], fs: f64) -> Result<Vec<Proposal>> {
        self.validate()?;
        let spec = welch_psd(iq, fs, self.segment, self.hop)?;
        match self.method {
            DetectorMethod::Energy => Ok(detect_energy(&spec, self)),
            DetectorMethod::MatchedFilter => detect_matched_filter(&spec, self),
        }
    }
}
