//! Object-detection style scoring on one-dimensional spectra.
//!
//! Predictions are intervals with a confidence (and, for joint evaluation, a
//! modulation). Within each entry predictions are matched greedily to
//! ground truth by descending confidence; across the dataset the matched
//! outcomes are ranked by confidence and summarized by all-point interpolated
//! average precision. Average recall keeps the top `k` predictions of each
//! entry and averages recall over the IoU thresholds.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{LabelRecord, ProposalRecord, ResultRecord};
use crate::detect::interval_iou;
use crate::modem::ModulationScheme;
use crate::{Error, Result};

const K: usize = ModulationScheme::COUNT;
/// Slack when comparing an IoU to its threshold, so that interval arithmetic
/// landing a hair below e.g. 0.75 still counts.
pub const IOU_EPS: f64 = 1e-12;

/// One prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub entry_id: u64,
    pub center_freq: f64,
    pub bandwidth: f64,
    pub confidence: f64,
    pub modulation: Option<ModulationScheme>,
}

impl Detection {
    fn low(&self) -> f64 {
        self.center_freq - self.bandwidth / 2.0
    }
    fn high(&self) -> f64 {
        self.center_freq + self.bandwidth / 2.0
    }
}

impl From<&ProposalRecord> for Detection {
    fn from(r: &ProposalRecord) -> Self {
        Detection {
            entry_id: r.entry_id,
            center_freq: r.center_freq_hz,
            bandwidth: r.bandwidth_hz,
            confidence: r.confidence,
            modulation: None,
        }
    }
}

impl From<&ResultRecord> for Detection {
    fn from(r: &ResultRecord) -> Self {
        Detection {
            entry_id: r.entry_id,
            center_freq: r.center_freq_hz,
            bandwidth: r.bandwidth_hz,
            confidence: r.confidence,
            modulation: Some(r.modulation),
        }
    }
}

/// One ground-truth signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub center_freq: f64,
    pub bandwidth: f64,
    pub modulation: ModulationScheme,
    pub snr_db: f64,
}

impl Truth {
    fn low(&self) -> f64 {
        self.center_freq - self.bandwidth / 2.0
    }
    fn high(&self) -> f64 {
        self.center_freq + self.bandwidth / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryTruth {
    pub entry_id: u64,
    pub signals: Vec<Truth>,
}

impl From<&LabelRecord> for EntryTruth {
    fn from(l: &LabelRecord) -> Self {
        EntryTruth {
            entry_id: l.entry_id,
            signals: l
                .signals
                .iter()
                .map(|s| Truth {
                    center_freq: s.center_freq_hz,
                    bandwidth: s.bandwidth_hz,
                    modulation: s.modulation,
                    snr_db: s.snr_db,
                })
                .collect(),
        }
    }
}

fn pair_iou(p: &Detection, t: &Truth) -> f64 {
    interval_iou(p.low(), p.high(), t.low(), t.high())
}

/// The default IoU grid 0.50, 0.55, ..., 0.95.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub iou_thresholds: Vec<f64>,
    /// Upper edges of the small and medium buckets, and the nominal upper
    /// edge of large; bandwidths above the last edge still count as large.
    pub size_edges_hz: Vec<f64>,
    pub ar_ks: Vec<usize>,
    pub class_agnostic: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig::for_capture(150_000.0, 1200)
    }
}

impl MatchConfig {
    /// Size edges of {110, 130, 150} samples converted to Hz via `fs / len`.
    pub fn for_capture(fs: f64, entry_len: usize) -> Self {
        let bin = fs / entry_len as f64;
        MatchConfig {
            iou_thresholds: default_iou_thresholds(),
            size_edges_hz: [110.0, 130.0, 150.0].iter().map(|n| n * bin).collect(),
            ar_ks: vec![4, 5, 6],
            class_agnostic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Param("iou_thresholds must not be empty".into()));
        }
        if self.iou_thresholds.windows(2).any(|w| !(w[0] < w[1]))
            || self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0))
        {
            return Err(Error::Param("iou_thresholds must be strictly increasing in (0, 1]".into()));
        }
        if self.size_edges_hz.len() < 2 || self.size_edges_hz.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Param("size_edges_hz needs at least two increasing edges".into()));
        }
        if self.ar_ks.contains(&0) {
            return Err(Error::Param("ar_ks entries must be >= 1".into()));
        }
        Ok(())
    }

    /// 0 = small, 1 = medium, 2 = large.
    pub fn size_bucket(&self, bandwidth: f64) -> usize {
        if bandwidth <= self.size_edges_hz[0] {
            0
        } else if bandwidth <= self.size_edges_hz[1] {
            1
        } else {
            2
        }
    }
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Matched the truth with this index.
    TruePositive(usize),
    FalsePositive,
    /// Matched an ignored truth or fell outside the evaluated subset.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    /// Outcome per prediction, in the input order of `preds`.
    pub outcomes: Vec<Outcome>,
    /// Matching prediction index per truth.
    pub truth_match: Vec<Option<usize>>,
}

impl MatchSet {
    pub fn true_positives(&self) -> usize {
        self.truth_match.iter().flatten().count()
    }
    pub fn false_negatives(&self) -> usize {
        self.truth_match.iter().filter(|m| m.is_none()).count()
    }
}

/// Prediction indices sorted by confidence, descending; ties keep input order.
fn rank_order(preds: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));
    idx
}

/// Greedy matching with COCO-style ignore regions. A prediction prefers the
/// best non-ignored truth; if only ignored truths qualify it is ignored, and
/// an unmatched prediction with `pred_active == false` is ignored too.
fn greedy_match(
    preds: &[Detection],
    truths: &[Truth],
    thr: f64,
    class_agnostic: bool,
    truth_active: &[bool],
    pred_active: &dyn Fn(&Detection) -> bool,
) -> MatchSet {
    let mut outcomes = vec![Outcome::FalsePositive; preds.len()];
    let mut truth_match = vec![None; truths.len()];
    for pi in rank_order(preds) {
        let p = &preds[pi];
        let mut best: Option<(bool, f64, usize)> = None;
        for (ti, t) in truths.iter().enumerate() {
            if truth_match[ti].is_some() || (!class_agnostic && p.modulation != Some(t.modulation)) {
                continue;
            }
            let v = pair_iou(p, t);
            if v + IOU_EPS < thr {
                continue;
            }
            let cand = (truth_active[ti], v, ti);
            let better = match best {
                None => true,
                Some((ba, bv, _)) => (cand.0 && !ba) || (cand.0 == ba && v > bv),
            };
            if better {
                best = Some(cand);
            }
        }
        outcomes[pi] = match best {
            Some((true, _, ti)) => {
                truth_match[ti] = Some(pi);
                Outcome::TruePositive(ti)
            }
            Some((false, _, ti)) => {
                truth_match[ti] = Some(pi);
                Outcome::Ignored
            }
            None if pred_active(p) => Outcome::FalsePositive,
            None => Outcome::Ignored,
        };
    }
    for (m, active) in truth_match.iter_mut().zip(truth_active) {
        if !active {
            *m = None;
        }
    }
    MatchSet { outcomes, truth_match }
}

/// Match one entry's predictions to its truths at `iou_thr`.
pub fn match_detections(preds: &[Detection], truths: &[Truth], iou_thr: f64, class_agnostic: bool) -> MatchSet {
    greedy_match(preds, truths, iou_thr, class_agnostic, &vec![true; truths.len()], &|_| true)
}

// ---------------------------------------------------------------------------
// AP / AR
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub confidence: f64,
}

/// Precision/recall after each ranked prediction. `scored` holds
/// `(confidence, is_true_positive)` in any order; ties keep input order.
pub fn pr_curve(scored: &[(f64, bool)], n_truth: usize) -> Vec<PrPoint> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut tp = 0usize;
    order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            tp += scored[i].1 as usize;
            PrPoint {
                recall: if n_truth == 0 { 0.0 } else { tp as f64 / n_truth as f64 },
                precision: tp as f64 / (rank + 1) as f64,
                confidence: scored[i].0,
            }
        })
        .collect()
}

/// All-point interpolated AP; `None` when there are no truths.
pub fn average_precision(scored: &[(f64, bool)], n_truth: usize) -> Option<f64> {
    if n_truth == 0 {
        return None;
    }
    let curve = pr_curve(scored, n_truth);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut interp = vec![0.0; curve.len()];
    let mut run = 0.0f64;
    for i in (0..curve.len()).rev() {
        run = run.max(curve[i].precision);
        interp[i] = run;
    }
    for (pt, p) in curve.iter().zip(&interp) {
        if pt.recall > prev_recall {
            ap += (pt.recall - prev_recall) * p;
            prev_recall = pt.recall;
        }
    }
    Some(ap.clamp(0.0, 1.0))
}

/// Everything needed to score one subset at one threshold.
#[derive(Debug, Default)]
struct Tally {
    scored: Vec<(f64, bool)>,
    n_truth: usize,
    n_matched: usize,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.scored.extend(other.scored);
        self.n_truth += other.n_truth;
        self.n_matched += other.n_matched;
        self
    }
    fn ap(&self) -> Option<f64> {
        average_precision(&self.scored, self.n_truth)
    }
    fn recall(&self) -> Option<f64> {
        (self.n_truth > 0).then(|| self.n_matched as f64 / self.n_truth as f64)
    }
}

/// Which slice of the data is scored.
#[derive(Debug, Clone, Copy)]
struct Subset {
    class: Option<ModulationScheme>,
    bucket: Option<usize>,
    top_k: Option<usize>,
}

const ALL: Subset = Subset {
    class: None,
    bucket: None,
    top_k: None,
};

/// Predictions and truths of one entry, predictions pre-sorted by confidence.
struct EntryData<'a> {
    preds: Vec<Detection>,
    truths: &'a [Truth],
}

fn tally_entry(e: &EntryData, thr: f64, cfg: &MatchConfig, sub: Subset) -> Tally {
    let mut preds: &[Detection] = &e.preds;
    if let Some(k) = sub.top_k {
        preds = &preds[..k.min(preds.len())];
    }
    let (preds, truths): (Vec<Detection>, Vec<Truth>) = match sub.class {
        Some(c) => (
            preds.iter().filter(|p| p.modulation == Some(c)).copied().collect(),
            e.truths.iter().filter(|t| t.modulation == c).copied().collect(),
        ),
        None => (preds.to_vec(), e.truths.to_vec()),
    };
    let active: Vec<bool> = truths
        .iter()
        .map(|t| sub.bucket.is_none_or(|b| cfg.size_bucket(t.bandwidth) == b))
        .collect();
    let pred_active = |p: &Detection| sub.bucket.is_none_or(|b| cfg.size_bucket(p.bandwidth) == b);
    let agnostic = cfg.class_agnostic || sub.class.is_some();
    let m = greedy_match(&preds, &truths, thr, agnostic, &active, &pred_active);
    let scored = preds
        .iter()
        .zip(&m.outcomes)
        .filter_map(|(p, o)| match o {
            Outcome::TruePositive(_) => Some((p.confidence, true)),
            Outcome::FalsePositive => Some((p.confidence, false)),
            Outcome::Ignored => None,
        })
        .collect();
    Tally {
        scored,
        n_truth: active.iter().filter(|a| **a).count(),
        n_matched: m.true_positives(),
    }
}

fn tally(entries: &[EntryData], thr: f64, cfg: &MatchConfig, sub: Subset) -> Tally {
    entries
        .par_iter()
        .map(|e| tally_entry(e, thr, cfg, sub))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::merge)
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Group predictions by entry, check ids, sort by confidence.
fn prepare<'a>(preds: &[Detection], truths: &'a [EntryTruth], joint: bool) -> Result<Vec<EntryData<'a>>> {
    let mut index = HashMap::with_capacity(truths.len());
    for (i, t) in truths.iter().enumerate() {
        if index.insert(t.entry_id, i).is_some() {
            return Err(Error::Input(format!("duplicate ground-truth entry_id {}", t.entry_id)));
        }
    }
    let mut grouped: Vec<Vec<Detection>> = vec![Vec::new(); truths.len()];
    for p in preds {
        let &i = index
            .get(&p.entry_id)
            .ok_or_else(|| Error::Input(format!("prediction references unknown entry_id {}", p.entry_id)))?;
        if !(p.bandwidth > 0.0) || !p.center_freq.is_finite() || !p.confidence.is_finite() {
            return Err(Error::Input(format!("malformed prediction in entry {}", p.entry_id)));
        }
        if joint && p.modulation.is_none() {
            return Err(Error::Input(format!(
                "joint evaluation needs a modulation on every prediction (entry {})",
                p.entry_id
            )));
        }
        grouped[i].push(*p);
    }
    Ok(grouped
        .into_iter()
        .zip(truths)
        .map(|(preds, t)| {
            let order = rank_order(&preds);
            EntryData {
                preds: order.into_iter().map(|i| preds[i]).collect(),
                truths: &t.signals,
            }
        })
        .collect())
}

/// AR keeping the top `k` predictions per entry, averaged over thresholds.
pub fn average_recall(preds: &[Detection], truths: &[EntryTruth], k: usize, cfg: &MatchConfig) -> Result<Option<f64>> {
    if k == 0 {
        return Err(Error::Param("k must be >= 1".into()));
    }
    cfg.validate()?;
    let entries = prepare(preds, truths, false)?;
    let sub = Subset { top_k: Some(k), ..ALL };
    Ok(ar_over(&entries, cfg, sub))
}

fn ar_over(entries: &[EntryData], cfg: &MatchConfig, sub: Subset) -> Option<f64> {
    // Recall is class-agnostic by definition: any prediction may cover a truth.
    let agnostic = MatchConfig {
        class_agnostic: true,
        ..cfg.clone()
    };
    mean(cfg.iou_thresholds.iter().map(|&t| tally(entries, t, &agnostic, sub).recall()))
}

// ---------------------------------------------------------------------------
// Confusion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: Vec<String>,
    /// Rows: true modulation of matched truths; columns: predicted.
    pub matrix: Vec<Vec<u64>>,
    /// Truths without a (class-agnostic) match, per true class.
    pub missed: Vec<u64>,
}

impl Confusion {
    pub fn truth_counts(&self) -> Vec<u64> {
        self.matrix
            .iter()
            .zip(&self.missed)
            .map(|(r, m)| r.iter().sum::<u64>() + m)
            .collect()
    }

    /// Correct classifications over all truths.
    pub fn accuracy(&self) -> Option<f64> {
        let total: u64 = self.truth_counts().iter().sum();
        let diag: u64 = (0..K).map(|k| self.matrix[k][k]).sum();
        (total > 0).then(|| diag as f64 / total as f64)
    }

    /// Correct classifications of class `k` over its truths.
    pub fn recall(&self, k: usize) -> Option<f64> {
        let n = self.truth_counts()[k];
        (n > 0).then(|| self.matrix[k][k] as f64 / n as f64)
    }
}

fn confusion_of(entries: &[EntryData], iou_thr: f64, snr: Option<f64>) -> Confusion {
    let mut matrix = vec![vec![0u64; K]; K];
    let mut missed = vec![0u64; K];
    for e in entries {
        let preds: Vec<Detection> = e.preds.iter().filter(|p| p.modulation.is_some()).copied().collect();
        let m = match_detections(&preds, e.truths, iou_thr, true);
        for (t, mi) in e.truths.iter().zip(&m.truth_match) {
            if snr.is_some_and(|s| t.snr_db != s) {
                continue;
            }
            let row = t.modulation.index();
            match mi {
                Some(pi) => matrix[row][preds[*pi].modulation.expect("filtered").index()] += 1,
                None => missed[row] += 1,
            }
        }
    }
    Confusion {
        classes: ModulationScheme::ALL.iter().map(|m| m.name().to_string()).collect(),
        matrix,
        missed,
    }
}

/// Confusion matrix of classified results at `iou_thr`.
pub fn confusion(results: &[Detection], truths: &[EntryTruth], iou_thr: f64) -> Result<Confusion> {
    let entries = prepare(results, truths, true)?;
    Ok(confusion_of(&entries, iou_thr, None))
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub iou_threshold: f64,
    /// Modulation name, or `"all"` for class-agnostic curves.
    pub class: String,
    pub ap: Option<f64>,
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrBreakdown {
    pub snr_db: f64,
    pub truths: usize,
    pub ap50: Option<f64>,
    pub recall50: Option<f64>,
    /// Joint mode only: correct classifications over truths at this SNR.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub entries: usize,
    pub predictions: usize,
    pub truths: usize,
    pub truths_by_size: [usize; 3],
    pub truths_by_class: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `"detection"` (class-agnostic) or `"joint"` (per-class, averaged).
    pub mode: String,
    pub iou_thresholds: Vec<f64>,
    pub size_edges_hz: Vec<f64>,
    pub ap_mean: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    /// `AR@k` keyed by `k`.
    pub ar: BTreeMap<String, Option<f64>>,
    pub ar_small: Option<f64>,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
    /// Joint mode: per-class AP averaged over thresholds.
    pub per_class_ap: BTreeMap<String, Option<f64>>,
    pub pr_curves: Vec<PrCurve>,
    pub confusion: Option<Confusion>,
    /// Joint mode: overall correct classifications over truths at IoU 0.5.
    pub accuracy: Option<f64>,
    pub by_snr: Vec<SnrBreakdown>,
    pub counts: Counts,
    /// Metrics that had no ground truth and were left out of means.
    pub undefined: Vec<String>,
}

impl EvalReport {
    pub fn ar_at(&self, k: usize) -> Option<f64> {
        self.ar.get(&k.to_string()).copied().flatten()
    }

    /// True when the report carries no data worth plotting.
    pub fn is_empty(&self) -> bool {
        self.counts.truths == 0 && self.counts.predictions == 0
    }
}

/// AP at one threshold: class-agnostic, or the mean of per-class APs.
fn ap_at(entries: &[EntryData], thr: f64, cfg: &MatchConfig, sub: Subset) -> Option<f64> {
    if cfg.class_agnostic {
        tally(entries, thr, cfg, sub).ap()
    } else {
        mean(
            ModulationScheme::ALL
                .iter()
                .map(|&c| tally(entries, thr, cfg, Subset { class: Some(c), ..sub }).ap()),
        )
    }
}

fn ap_over(entries: &[EntryData], cfg: &MatchConfig, sub: Subset) -> Option<f64> {
    mean(cfg.iou_thresholds.iter().map(|&t| ap_at(entries, t, cfg, sub)))
}

/// Attribute each prediction to the SNR of the truth it overlaps most (or,
/// failing any overlap, the nearest centre). Entries without truths keep
/// their predictions in every SNR group.
fn restrict_to_snr<'a>(entries: &[EntryData<'a>], snr: f64) -> (Vec<EntryData<'a>>, Vec<Vec<Truth>>) {
    let mut kept_truths = Vec::with_capacity(entries.len());
    let mut preds_out = Vec::with_capacity(entries.len());
    for e in entries {
        let truths: Vec<Truth> = e.truths.iter().filter(|t| t.snr_db == snr).copied().collect();
        let preds = if e.truths.is_empty() {
            e.preds.clone()
        } else {
            e.preds
                .iter()
                .filter(|p| {
                    let best = e
                        .truths
                        .iter()
                        .max_by(|a, b| {
                            let ka = (pair_iou(p, a), -(p.center_freq - a.center_freq).abs());
                            let kb = (pair_iou(p, b), -(p.center_freq - b.center_freq).abs());
                            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
                        })
                        .expect("non-empty");
                    best.snr_db == snr
                })
                .copied()
                .collect()
        };
        kept_truths.push(truths);
        preds_out.push(preds);
    }
    (
        preds_out
            .into_iter()
            .map(|preds| EntryData { preds, truths: &[] })
            .collect(),
        kept_truths,
    )
}

/// Full metric family over a dataset.
pub fn map_report(preds: &[Detection], truths: &[EntryTruth], cfg: &MatchConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let joint = !cfg.class_agnostic;
    let entries = prepare(preds, truths, joint)?;
    let mut undefined = Vec::new();
    let mut note = |name: String, v: Option<f64>| {
        if v.is_none() {
            undefined.push(name);
        }
        v
    };

    let at = |t: f64| ap_at(&entries, t, cfg, ALL);
    let ap_mean = note("ap_mean".into(), ap_over(&entries, cfg, ALL));
    let ap50 = note("ap50".into(), at(0.50));
    let ap75 = note("ap75".into(), at(0.75));
    let bucket = |b| Subset { bucket: Some(b), ..ALL };
    let ap_small = note("ap_small".into(), ap_over(&entries, cfg, bucket(0)));
    let ap_medium = note("ap_medium".into(), ap_over(&entries, cfg, bucket(1)));
    let ap_large = note("ap_large".into(), ap_over(&entries, cfg, bucket(2)));

    let mut ar = BTreeMap::new();
    for &k in &cfg.ar_ks {
        let v = ar_over(&entries, cfg, Subset { top_k: Some(k), ..ALL });
        ar.insert(k.to_string(), note(format!("ar@{k}"), v));
    }
    let k_max = cfg.ar_ks.iter().copied().max();
    let ar_bucket = |b| ar_over(&entries, cfg, Subset { bucket: Some(b), top_k: k_max, ..ALL });
    let ar_small = note("ar_small".into(), ar_bucket(0));
    let ar_medium = note("ar_medium".into(), ar_bucket(1));
    let ar_large = note("ar_large".into(), ar_bucket(2));

    let mut per_class_ap = BTreeMap::new();
    let mut pr_curves = Vec::new();
    let classes: Vec<Option<ModulationScheme>> = if joint {
        ModulationScheme::ALL.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    for &class in &classes {
        let name = class.map_or("all".to_string(), |c| c.name().to_string());
        let sub = Subset { class, ..ALL };
        let mut aps = Vec::new();
        for &t in &cfg.iou_thresholds {
            let tl = tally(&entries, t, cfg, sub);
            let ap = tl.ap();
            aps.push(ap);
            pr_curves.push(PrCurve {
                iou_threshold: t,
                class: name.clone(),
                ap,
                points: pr_curve(&tl.scored, tl.n_truth),
            });
        }
        if let Some(c) = class {
            per_class_ap.insert(c.name().to_string(), note(format!("ap[{c}]"), mean(aps)));
        }
    }

    let confusion = joint.then(|| confusion_of(&entries, 0.5, None));
    let accuracy = confusion.as_ref().and_then(Confusion::accuracy);

    let mut snrs: Vec<f64> = truths.iter().flat_map(|t| t.signals.iter().map(|s| s.snr_db)).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let by_snr = snrs
        .iter()
        .map(|&snr| {
            let (mut sub_entries, sub_truths) = restrict_to_snr(&entries, snr);
            for (e, t) in sub_entries.iter_mut().zip(&sub_truths) {
                e.truths = t;
            }
            let n = sub_truths.iter().map(Vec::len).sum();
            let acc = joint.then(|| confusion_of(&entries, 0.5, Some(snr)).accuracy()).flatten();
            SnrBreakdown {
                snr_db: snr,
                truths: n,
                ap50: ap_at(&sub_entries, 0.5, cfg, ALL),
                recall50: ar_over(
                    &sub_entries,
                    &MatchConfig {
                        iou_thresholds: vec![0.5],
                        ..cfg.clone()
                    },
                    ALL,
                ),
                accuracy: acc,
            }
        })
        .collect();

    let all_truths = truths.iter().flat_map(|t| &t.signals);
    let mut truths_by_size = [0usize; 3];
    let mut truths_by_class: BTreeMap<String, usize> =
        ModulationScheme::ALL.iter().map(|m| (m.name().to_string(), 0)).collect();
    let mut n_truths = 0;
    for t in all_truths {
        n_truths += 1;
        truths_by_size[cfg.size_bucket(t.bandwidth)] += 1;
        *truths_by_class.get_mut(t.modulation.name()).expect("all classes") += 1;
    }

    Ok(EvalReport {
        mode: if joint { "joint" } else { "detection" }.to_string(),
        iou_thresholds: cfg.iou_thresholds.clone(),
        size_edges_hz: cfg.size_edges_hz.clone(),
        ap_mean,
        ap50,
        ap75,
        ap_small,
        ap_medium,
        ap_large,
        ar,
        ar_small,
        ar_medium,
        ar_large,
        per_class_ap,
        pr_curves,
        confusion,
        accuracy,
        by_snr,
        counts: Counts {
            entries: truths.len(),
            predictions: preds.len(),
            truths: n_truths,
            truths_by_size,
            truths_by_class,
        },
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(c: f64, bw: f64, conf: f64) -> Detection {
        Detection {
            entry_id: 0,
            center_freq: c,
            bandwidth: bw,
            confidence: conf,
            modulation: None,
        }
    }

    fn truth(c: f64, bw: f64) -> Truth {
        Truth {
            center_freq: c,
            bandwidth: bw,
            modulation: ModulationScheme::Bpsk,
            snr_db: 20.0,
        }
    }

    #[test]
    fn higher_confidence_wins_the_truth() {
        let m = match_detections(&[det(0.0, 10.0, 0.4), det(0.5, 10.0, 0.9)], &[truth(0.0, 10.0)], 0.5, true);
        assert_eq!(m.outcomes, vec![Outcome::FalsePositive, Outcome::TruePositive(0)]);
    }

    #[test]
    fn no_predictions_is_a_false_negative() {
        let m = match_detections(&[], &[truth(0.0, 10.0)], 0.5, true);
        assert_eq!(m.false_negatives(), 1);
    }

    #[test]
    fn below_threshold_is_false_positive() {
        // intervals [0,10] and [5.5, 15.5]: IoU = 4.5 / 15.5 < 0.5
        let m = match_detections(&[det(10.5, 10.0, 1.0)], &[truth(5.0, 10.0)], 0.5, true);
        assert_eq!(m.outcomes, vec![Outcome::FalsePositive]);
    }

    #[test]
    fn ap_three_point_example() {
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn ap_edge_cases() {
        assert_eq!(average_precision(&[], 3), Some(0.0));
        assert_eq!(average_precision(&[(1.0, false)], 0), None);
        assert_eq!(average_precision(&[(1.0, true), (0.5, true)], 2), Some(1.0));
    }

    #[test]
    fn ar_single_truth_at_iou_075() {
        // truth [0, 100]; prediction [0, 75] has IoU 0.75
        let truths = vec![EntryTruth {
            entry_id: 0,
            signals: vec![truth(50.0, 100.0)],
        }];
        let ar = average_recall(&[det(37.5, 75.0, 1.0)], &truths, 4, &MatchConfig::default()).unwrap();
        assert!((ar.unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn default_size_edges() {
        let cfg = MatchConfig::default();
        assert_eq!(cfg.size_edges_hz, vec![13_750.0, 16_250.0, 18_750.0]);
        assert_eq!(cfg.size_bucket(12_656.25), 0);
        assert_eq!(cfg.size_bucket(14_464.285714), 1);
        assert_eq!(cfg.size_bucket(16_875.0), 2);
        assert_eq!(cfg.size_bucket(30_000.0), 2);
    }

    #[test]
    fn unknown_entry_is_rejected() {
        let mut d = det(0.0, 1.0, 1.0);
        d.entry_id = 9;
        let err = map_report(&[d], &[], &MatchConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }
}
