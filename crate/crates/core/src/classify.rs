//! Stage two: isolate each proposed band and predict its modulation.
//!
//! A proposal's band is mixed to baseband, low-pass filtered, decimated to
//! about two samples per (estimated) symbol and power-normalized. The slice
//! is summarized by normalized higher-order cumulants which feed either a
//! nearest-centroid model or a multinomial logistic regression.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detect::Proposal;
use crate::dsp::{self, Window};
use crate::modem::ModulationScheme;
use crate::synth::Entry;
use crate::{Error, Result};

pub const EXTRACT_FILTER_ORDER: usize = 63;
pub const EXTRACT_CUTOFF_MARGIN: f64 = 1.05;
pub const MIN_FEATURE_SAMPLES: usize = 64;
pub const NUM_FEATURES: usize = 5;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["abs_c20", "abs_c40", "c42", "abs_c41", "amp_kurtosis"];
pub const MODEL_VERSION: u32 = 1;
const K: usize = ModulationScheme::COUNT;
const MIN_STD: f64 = 1e-6;

/// Baseband samples of one proposal, unit mean power.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSlice {
    pub samples: Vec<Complex64>,
    pub est_symbol_rate: f64,
    /// Sample rate of `samples` after decimation.
    pub sample_rate: f64,
}

/// Mix the proposal's band to 0 Hz, low-pass, decimate to ~2 samples per
/// estimated symbol and normalize to unit power.
pub fn extract_slice(iq: &[Complex64], fs: f64, proposal: &Proposal, rolloff: f64) -> Result<SignalSlice> {
    proposal.validate(fs)?;
    if !(rolloff >= 0.0) {
        return Err(Error::Param(format!("rolloff {rolloff} must be >= 0")));
    }
    let baseband = dsp::mix(iq, -proposal.center_freq, fs);
    let taps = dsp::lowpass_taps(
        EXTRACT_FILTER_ORDER,
        proposal.bandwidth / 2.0 * EXTRACT_CUTOFF_MARGIN,
        fs,
        Window::Hamming,
    );
    let filtered = dsp::filter_same(&baseband, &taps);
    let est_symbol_rate = proposal.bandwidth / (1.0 + rolloff);
    let factor = ((fs / (2.0 * est_symbol_rate)).round() as usize).max(1);
    let mut samples: Vec<Complex64> = filtered.into_iter().step_by(factor).collect();
    if dsp::normalize_power(&mut samples).is_none() {
        return Err(Error::Degenerate("extracted slice has zero power".into()));
    }
    Ok(SignalSlice {
        samples,
        est_symbol_rate,
        sample_rate: fs / factor as f64,
    })
}

/// Normalized sample cumulants (divided by the matching power of `C21`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulants {
    pub c20: Complex64,
    pub c21: f64,
    pub c40: Complex64,
    pub c41: Complex64,
    pub c42: f64,
}

pub fn cumulants(samples: &[Complex64]) -> Result<Cumulants> {
    if samples.len() < MIN_FEATURE_SAMPLES {
        return Err(Error::Input(format!(
            "{} samples; cumulant features need at least {MIN_FEATURE_SAMPLES}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let (mut m20, mut m40, mut m41) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let (mut m21, mut m42) = (0.0, 0.0);
    for &s in samples {
        let s2 = s * s;
        let p = s.norm_sqr();
        m20 += s2;
        m21 += p;
        m40 += s2 * s2;
        m41 += s2 * p;
        m42 += p * p;
    }
    let (m20, m21, m40, m41, m42) = (m20 / n, m21 / n, m40 / n, m41 / n, m42 / n);
    if !(m21 > 0.0) {
        return Err(Error::Degenerate("zero-power slice".into()));
    }
    let c40 = m40 - m20 * m20 * 3.0;
    let c41 = m41 - m20 * m21 * 3.0;
    let c42 = m42 - m20.norm_sqr() - 2.0 * m21 * m21;
    let p2 = m21 * m21;
    Ok(Cumulants {
        c20: m20 / m21,
        c21: m21,
        c40: c40 / p2,
        c41: c41 / p2,
        c42: c42 / p2,
    })
}

/// `E[(a - mean)^4] / var^2` of the amplitude `a = |s|`; zero when the
/// amplitude is constant.
pub fn amplitude_kurtosis(samples: &[Complex64]) -> f64 {
    let n = samples.len() as f64;
    let amp: Vec<f64> = samples.iter().map(|s| s.norm()).collect();
    let mean = amp.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for a in &amp {
        let d = (a - mean) * (a - mean);
        m2 += d;
        m4 += d * d;
    }
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 < 1e-12 {
        0.0
    } else {
        m4 / (m2 * m2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

pub fn cumulant_features(slice: &SignalSlice) -> Result<FeatureVector> {
    features_of(&slice.samples)
}

/// Features of raw samples (no extraction step).
pub fn features_of(samples: &[Complex64]) -> Result<FeatureVector> {
    let c = cumulants(samples)?;
    let f = [
        c.c20.norm(),
        c.c40.norm(),
        c.c42,
        c.c41.norm(),
        amplitude_kurtosis(samples),
    ];
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite cumulant feature".into()));
    }
    Ok(FeatureVector(f))
}

/// Ground-truth bands of an entry as unit-confidence proposals.
pub fn truth_proposals(entry: &Entry) -> Vec<(Proposal, ModulationScheme)> {
    entry
        .truths
        .iter()
        .map(|t| {
            (
                Proposal {
                    center_freq: t.center_freq,
                    bandwidth: t.bandwidth,
                    confidence: 1.0,
                },
                t.modulation,
            )
        })
        .collect()
}

/// Labelled features from ground-truth proposals of every entry.
pub fn training_examples<'a, I>(entries: I, rolloff: f64) -> Result<Vec<(FeatureVector, ModulationScheme)>>
where
    I: IntoIterator<Item = &'a Entry>,
{
    let mut out = Vec::new();
    for e in entries {
        for (p, m) in truth_proposals(e) {
            let slice = extract_slice(&e.iq, e.fs, &p, rolloff)?;
            out.push((cumulant_features(&slice)?, m));
        }
    }
    Ok(out)
}

fn softmax(logits: &[f64; K]) -> [f64; K] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; K];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

fn argmax(v: &[f64; K]) -> usize {
    let mut best = 0;
    for i in 1..K {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// A stage-two classifier: features in, class probabilities out
/// ([`ModulationScheme::ALL`] order).
pub trait Classifier {
    fn scores(&self, features: &FeatureVector) -> [f64; K];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedSignal {
    pub modulation: ModulationScheme,
    pub scores: [f64; K],
}

pub fn predict<C: Classifier + ?Sized>(model: &C, slice: &SignalSlice) -> Result<ClassifiedSignal> {
    let f = cumulant_features(slice)?;
    Ok(predict_features(model, &f))
}

pub fn predict_features<C: Classifier + ?Sized>(model: &C, features: &FeatureVector) -> ClassifiedSignal {
    let scores = model.scores(features);
    ClassifiedSignal {
        modulation: ModulationScheme::ALL[argmax(&scores)],
        scores,
    }
}

// ---------------------------------------------------------------------------
// Nearest centroid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidClass {
    pub modulation: ModulationScheme,
    pub count: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub classes: Vec<CentroidClass>,
}

pub const MIN_EXAMPLES_PER_CLASS: usize = 10;

fn group_by_class(examples: &[(FeatureVector, ModulationScheme)]) -> Result<Vec<Vec<&FeatureVector>>> {
    let mut groups: Vec<Vec<&FeatureVector>> = vec![Vec::new(); K];
    for (f, m) in examples {
        groups[m.index()].push(f);
    }
    for (k, g) in groups.iter().enumerate() {
        if g.len() < MIN_EXAMPLES_PER_CLASS {
            return Err(Error::Training(format!(
                "class {} has {} examples, need at least {MIN_EXAMPLES_PER_CLASS}",
                ModulationScheme::ALL[k],
                g.len()
            )));
        }
    }
    Ok(groups)
}

fn mean_std<'a, I: IntoIterator<Item = &'a FeatureVector> + Clone>(fs: I) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; NUM_FEATURES];
    let mut n = 0.0;
    for f in fs.clone() {
        n += 1.0;
        for (m, v) in mean.iter_mut().zip(f.0) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; NUM_FEATURES];
    for f in fs {
        for ((s, v), m) in var.iter_mut().zip(f.0).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt().max(MIN_STD)).collect();
    (mean, std)
}

pub fn train_centroid(examples: &[(FeatureVector, ModulationScheme)]) -> Result<CentroidModel> {
    let groups = group_by_class(examples)?;
    let classes = groups
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let (mean, std) = mean_std(g.iter().copied());
            CentroidClass {
                modulation: ModulationScheme::ALL[k],
                count: g.len(),
                mean,
                std,
            }
        })
        .collect();
    Ok(CentroidModel { classes })
}

impl CentroidModel {
    /// Standardized Euclidean distance to each class centroid.
    pub fn distances(&self, features: &FeatureVector) -> [f64; K] {
        let mut d = [f64::INFINITY; K];
        for c in &self.classes {
            let s: f64 = features
                .0
                .iter()
                .zip(&c.mean)
                .zip(&c.std)
                .map(|((x, m), s)| ((x - m) / s).powi(2))
                .sum();
            d[c.modulation.index()] = s.sqrt();
        }
        d
    }

    fn validate(&self) -> Result<()> {
        for c in &self.classes {
            if c.mean.len() != NUM_FEATURES || c.std.len() != NUM_FEATURES {
                return Err(Error::Input(format!("centroid for {} has the wrong feature count", c.modulation)));
            }
            if c.std.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::Input(format!("centroid for {} has a non-positive std", c.modulation)));
            }
        }
        Ok(())
    }
}

/// `softmax(-distances)`.
pub fn scores_from_distances(distances: &[f64; K]) -> [f64; K] {
    let neg: [f64; K] = std::array::from_fn(|k| -distances[k]);
    softmax(&neg)
}

impl Classifier for CentroidModel {
    fn scores(&self, features: &FeatureVector) -> [f64; K] {
        scores_from_distances(&self.distances(features))
    }
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// `K x (F + 1)`; the last column is the bias.
    pub weights: Vec<Vec<f64>>,
}

impl LinearModel {
    pub fn zeros(feature_mean: Vec<f64>, feature_std: Vec<f64>) -> Self {
        LinearModel {
            feature_mean,
            feature_std,
            weights: vec![vec![0.0; NUM_FEATURES + 1]; K],
        }
    }

    /// Standardized features with a trailing 1 for the bias.
    pub fn augment(&self, features: &FeatureVector) -> Vec<f64> {
        let mut x: Vec<f64> = features
            .0
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        x.push(1.0);
        x
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != K
            || self.weights.iter().any(|r| r.len() != NUM_FEATURES + 1)
            || self.feature_mean.len() != NUM_FEATURES
            || self.feature_std.len() != NUM_FEATURES
        {
            return Err(Error::Input("linear model has inconsistent shapes".into()));
        }
        if self.feature_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Input("linear model has a non-positive feature std".into()));
        }
        Ok(())
    }
}

fn logits(weights: &[Vec<f64>], x: &[f64]) -> [f64; K] {
    std::array::from_fn(|k| weights[k].iter().zip(x).map(|(w, v)| w * v).sum())
}

fn class_probs(weights: &[Vec<f64>], x: &[f64]) -> [f64; K] {
    softmax(&logits(weights, x))
}

impl Classifier for LinearModel {
    fn scores(&self, features: &FeatureVector) -> [f64; K] {
        class_probs(&self.weights, &self.augment(features))
    }
}

/// Mean cross-entropy and its gradient with respect to `weights` for
/// augmented inputs `xs` and class indices `ys`.
pub fn softmax_loss_and_grad(weights: &[Vec<f64>], xs: &[Vec<f64>], ys: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let cols = weights.first().map_or(0, Vec::len);
    let mut grad = vec![vec![0.0; cols]; weights.len()];
    let mut loss = 0.0;
    let n = xs.len() as f64;
    for (x, &y) in xs.iter().zip(ys) {
        let z = logits(weights, x);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        let p = softmax(&z);
        for k in 0..K {
            let g = p[k] - if k == y { 1.0 } else { 0.0 };
            for (gk, v) in grad[k].iter_mut().zip(x) {
                *gk += g * v;
            }
        }
    }
    grad.iter_mut().flatten().for_each(|g| *g /= n);
    (loss / n, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLinear {
    pub model: LinearModel,
    /// Loss before each update, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent on the multinomial logistic loss.
pub fn train_linear(examples: &[(FeatureVector, ModulationScheme)], epochs: usize, lr: f64) -> Result<TrainedLinear> {
    if !(lr > 0.0) {
        return Err(Error::Param(format!("learning rate {lr} must be positive")));
    }
    group_by_class(examples)?;
    let (mean, std) = mean_std(examples.iter().map(|(f, _)| f));
    let mut model = LinearModel::zeros(mean, std);
    let xs: Vec<Vec<f64>> = examples.iter().map(|(f, _)| model.augment(f)).collect();
    let ys: Vec<usize> = examples.iter().map(|(_, m)| m.index()).collect();
    let mut loss_history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (loss, grad) = softmax_loss_and_grad(&model.weights, &xs, &ys);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        loss_history.push(loss);
        for (row, g) in model.weights.iter_mut().zip(&grad) {
            for (w, gv) in row.iter_mut().zip(g) {
                *w -= lr * gv;
            }
        }
        if model.weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
    }
    Ok(TrainedLinear { model, loss_history })
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Centroid(CentroidModel),
    Linear(LinearModel),
}

impl Classifier for Model {
    fn scores(&self, features: &FeatureVector) -> [f64; K] {
        match self {
            Model::Centroid(m) => m.scores(features),
            Model::Linear(m) => m.scores(features),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub feature_names: Vec<String>,
    #[serde(flatten)]
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model) -> Self {
        ModelFile {
            version: MODEL_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::Version {
                found: self.version.to_string(),
                expected: MODEL_VERSION.to_string(),
            });
        }
        if self.feature_names != FEATURE_NAMES {
            return Err(Error::schema(
                "model",
                "feature_names",
                format!("expected {FEATURE_NAMES:?}, found {:?}", self.feature_names),
            ));
        }
        match &self.model {
            Model::Centroid(m) => m.validate(),
            Model::Linear(m) => m.validate(),
        }
    }
}

/// Extract and classify every proposal of one capture.
pub fn classify_proposals<C: Classifier + ?Sized>(
    model: &C,
    iq: &[Complex64],
    fs: f64,
    proposals: &[Proposal],
    rolloff: f64,
) -> Result<Vec<ClassifiedSignal>> {
    proposals
        .iter()
        .map(|p| predict(model, &extract_slice(iq, fs, p, rolloff)?))
        .collect()
}
