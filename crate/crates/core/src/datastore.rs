//! On-disk formats.
//!
//! A dataset directory holds three files:
//!
//! - `manifest.json`: `{format_version, fs_hz, entry_len, band_low_hz,
//!   band_high_hz, master_seed, entry_count}`
//! - `entries.iq`: one fixed-stride record per entry, `entry_len` samples of
//!   little-endian `f32` pairs (I then Q), i.e. `entry_len * 8` bytes
//! - `labels.jsonl`: line `k` describes record `k`:
//!   `{entry_id, signals: [{center_freq_hz, bandwidth_hz, modulation, snr_db,
//!   symbol_rate_hz, channel: {kind, k_factor, max_doppler_hz,
//!   clock_offset_ppm, path_delays_s, path_gains_db}}]}`
//!
//! Detector and classifier outputs are JSON-lines files of
//! [`ProposalRecord`] / [`ResultRecord`]. All JSON is written canonically:
//! keys sorted, floats rounded to 9 significant digits, unknown keys carried
//! through untouched.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{ChannelKind, ChannelSpec, DEFAULT_PATH_DELAYS_S, DEFAULT_PATH_GAINS_DB};
use crate::modem::ModulationScheme;
use crate::synth::{entry_seed, Entry, GenConfig, SignalSpec};
use crate::{Error, Result};

pub const FORMAT_VERSION: &str = "crml23/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IQ_FILE: &str = "entries.iq";
pub const LABELS_FILE: &str = "labels.jsonl";

/// Significant digits kept for every float written as JSON.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Round to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("is_f64");
            if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Canonical JSON value of `value`: sorted keys, rounded floats.
pub fn canonical_value<T: Serialize>(value: &T) -> Result<Value> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Input(e.to_string()))?;
    round_value(&mut v);
    Ok(v)
}

/// Single-line canonical JSON.
pub fn to_canonical_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(canonical_value(value)?.to_string())
}

/// Pretty-printed canonical JSON document, newline terminated.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let v = canonical_value(value)?;
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| Error::Input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Json {
        file: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    serde_json::from_value(v).map_err(|e| data_error(path.display().to_string(), e))
}

/// Best-effort field name from a serde data error message.
fn data_error(location: String, e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<record>".to_string());
    Error::schema(location, field, msg)
}

// ---------------------------------------------------------------------------
// Dataset layout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub fs_hz: f64,
    pub entry_len: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub master_seed: u64,
    pub entry_count: usize,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn for_config(cfg: &GenConfig) -> Self {
        Manifest {
            format_version: FORMAT_VERSION.to_string(),
            fs_hz: cfg.fs_hz,
            entry_len: cfg.entry_len,
            band_low_hz: cfg.band_low_hz,
            band_high_hz: cfg.band_high_hz,
            master_seed: cfg.master_seed,
            entry_count: 0,
            extra: BTreeMap::new(),
        }
    }

    pub fn record_stride(&self) -> usize {
        self.entry_len * 2 * 4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLabel {
    pub kind: ChannelKind,
    pub k_factor: f64,
    pub max_doppler_hz: f64,
    pub clock_offset_ppm: f64,
    #[serde(default = "default_delays")]
    pub path_delays_s: Vec<f64>,
    #[serde(default = "default_gains")]
    pub path_gains_db: Vec<f64>,
}

fn default_delays() -> Vec<f64> {
    DEFAULT_PATH_DELAYS_S.to_vec()
}

fn default_gains() -> Vec<f64> {
    DEFAULT_PATH_GAINS_DB.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalLabel {
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub modulation: ModulationScheme,
    pub snr_db: f64,
    pub symbol_rate_hz: f64,
    pub channel: ChannelLabel,
}

impl From<&SignalSpec> for SignalLabel {
    fn from(s: &SignalSpec) -> Self {
        SignalLabel {
            center_freq_hz: s.center_freq,
            bandwidth_hz: s.bandwidth,
            modulation: s.modulation,
            snr_db: s.snr_db,
            symbol_rate_hz: s.symbol_rate,
            channel: ChannelLabel {
                kind: s.channel.kind,
                k_factor: s.channel.k_factor,
                max_doppler_hz: s.channel.max_doppler,
                clock_offset_ppm: s.channel.clock_offset_ppm,
                path_delays_s: s.channel.path_delays.clone(),
                path_gains_db: s.channel.path_gains_db.clone(),
            },
        }
    }
}

impl From<SignalLabel> for SignalSpec {
    fn from(l: SignalLabel) -> Self {
        SignalSpec {
            modulation: l.modulation,
            symbol_rate: l.symbol_rate_hz,
            center_freq: l.center_freq_hz,
            bandwidth: l.bandwidth_hz,
            snr_db: l.snr_db,
            channel: ChannelSpec {
                kind: l.channel.kind,
                path_delays: l.channel.path_delays_s,
                path_gains_db: l.channel.path_gains_db,
                k_factor: l.channel.k_factor,
                max_doppler: l.channel.max_doppler_hz,
                clock_offset_ppm: l.channel.clock_offset_ppm,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub entry_id: u64,
    pub signals: Vec<SignalLabel>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

/// Streaming dataset writer; call [`DatasetWriter::finish`] to emit the manifest.
pub struct DatasetWriter {
    dir: PathBuf,
    manifest: Manifest,
    iq: BufWriter<File>,
    labels: BufWriter<File>,
}

impl DatasetWriter {
    pub fn create(dir: &Path, mut manifest: Manifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<BufWriter<File>> {
            let p = dir.join(name);
            File::create(&p).map(BufWriter::new).map_err(|e| Error::io(p, e))
        };
        manifest.entry_count = 0;
        manifest.format_version = FORMAT_VERSION.to_string();
        Ok(DatasetWriter {
            dir: dir.to_path_buf(),
            iq: open(IQ_FILE)?,
            labels: open(LABELS_FILE)?,
            manifest,
        })
    }

    pub fn push(&mut self, entry: &Entry) -> Result<()> {
        if entry.iq.len() != self.manifest.entry_len {
            return Err(Error::Input(format!(
                "entry {} has {} samples, dataset stride expects {}",
                entry.entry_id,
                entry.iq.len(),
                self.manifest.entry_len
            )));
        }
        let mut buf = Vec::with_capacity(self.manifest.record_stride());
        for s in &entry.iq {
            buf.extend_from_slice(&(s.re as f32).to_le_bytes());
            buf.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        let iq_path = self.dir.join(IQ_FILE);
        self.iq.write_all(&buf).map_err(|e| Error::io(&iq_path, e))?;
        let label = LabelRecord {
            entry_id: entry.entry_id,
            signals: entry.truths.iter().map(SignalLabel::from).collect(),
            extra: BTreeMap::new(),
        };
        let labels_path = self.dir.join(LABELS_FILE);
        writeln!(self.labels, "{}", to_canonical_line(&label)?).map_err(|e| Error::io(&labels_path, e))?;
        self.manifest.entry_count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<Manifest> {
        self.iq.flush().map_err(|e| Error::io(self.dir.join(IQ_FILE), e))?;
        self.labels.flush().map_err(|e| Error::io(self.dir.join(LABELS_FILE), e))?;
        write_json(&self.dir.join(MANIFEST_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Write `entries` as a dataset directory.
pub fn write_dataset<I>(entries: I, dir: &Path, manifest: Manifest) -> Result<Manifest>
where
    I: IntoIterator<Item = Entry>,
{
    let mut w = DatasetWriter::create(dir, manifest)?;
    for e in entries {
        w.push(&e)?;
    }
    w.finish()
}

/// Read-only view of a dataset directory. Labels are parsed up front; I/Q
/// records are read on demand by stride.
#[derive(Debug, Clone)]
pub struct Dataset {
    dir: PathBuf,
    manifest: Manifest,
    labels: Vec<LabelRecord>,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: manifest.format_version,
                expected: FORMAT_VERSION.to_string(),
            });
        }
        let iq_path = dir.join(IQ_FILE);
        let size = fs::metadata(&iq_path).map_err(|e| Error::io(&iq_path, e))?.len();
        let expected = (manifest.entry_count * manifest.record_stride()) as u64;
        if size != expected {
            return Err(Error::Corrupt(format!(
                "{} holds {size} bytes but the manifest implies {expected} ({} entries x {} bytes)",
                iq_path.display(),
                manifest.entry_count,
                manifest.record_stride()
            )));
        }
        let labels: Vec<LabelRecord> = read_jsonl(&dir.join(LABELS_FILE))?;
        if labels.len() != manifest.entry_count {
            return Err(Error::Corrupt(format!(
                "{} has {} lines but the manifest declares {} entries",
                LABELS_FILE,
                labels.len(),
                manifest.entry_count
            )));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            labels,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truths(&self, index: usize) -> Vec<SignalSpec> {
        self.labels[index].signals.iter().cloned().map(SignalSpec::from).collect()
    }

    /// Record `index` (position in the file, not `entry_id`).
    pub fn entry(&self, index: usize) -> Result<Entry> {
        let label = self
            .labels
            .get(index)
            .ok_or_else(|| Error::Input(format!("entry index {index} out of range (len {})", self.len())))?;
        let stride = self.manifest.record_stride();
        let path = self.dir.join(IQ_FILE);
        let mut f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        f.seek(SeekFrom::Start((index * stride) as u64))
            .map_err(|e| Error::io(&path, e))?;
        let mut buf = vec![0u8; stride];
        f.read_exact(&mut buf).map_err(|e| Error::io(&path, e))?;
        let iq = buf
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        Ok(Entry {
            entry_id: label.entry_id,
            seed: entry_seed(self.manifest.master_seed, label.entry_id),
            fs: self.manifest.fs_hz,
            iq,
            truths: self.truths(index),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Entry>> + '_ {
        (0..self.len()).map(move |k| self.entry(k))
    }
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::open(dir)
}

// ---------------------------------------------------------------------------
// Proposal / result records
// ---------------------------------------------------------------------------

/// Records that can check their own field constraints.
pub trait Validate {
    /// Returns `(field path, message)` for the first violation.
    fn violation(&self) -> Option<(String, String)>;
}

impl Validate for LabelRecord {
    fn violation(&self) -> Option<(String, String)> {
        self.signals.iter().enumerate().find_map(|(i, s)| {
            (!(s.bandwidth_hz > 0.0)).then(|| (format!("signals[{i}].bandwidth_hz"), "must be > 0".to_string()))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub entry_id: u64,
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub confidence: f64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub entry_id: u64,
    pub center_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub confidence: f64,
    pub modulation: ModulationScheme,
    /// Probabilities in [`ModulationScheme::ALL`] order.
    pub class_scores: Vec<f64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

fn band_violation(bandwidth: f64, confidence: f64, center: f64) -> Option<(String, String)> {
    if !center.is_finite() {
        return Some(("center_freq_hz".into(), "must be finite".into()));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Some(("bandwidth_hz".into(), format!("{bandwidth} must be > 0")));
    }
    if !(0.0..=1.0).contains(&confidence) {
        return Some(("confidence".into(), format!("{confidence} outside [0, 1]")));
    }
    None
}

impl Validate for ProposalRecord {
    fn violation(&self) -> Option<(String, String)> {
        band_violation(self.bandwidth_hz, self.confidence, self.center_freq_hz)
    }
}

impl Validate for ResultRecord {
    fn violation(&self) -> Option<(String, String)> {
        if let Some(v) = band_violation(self.bandwidth_hz, self.confidence, self.center_freq_hz) {
            return Some(v);
        }
        if self.class_scores.len() != ModulationScheme::COUNT {
            return Some((
                "class_scores".into(),
                format!("expected {} scores, found {}", ModulationScheme::COUNT, self.class_scores.len()),
            ));
        }
        if let Some(i) = self.class_scores.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Some((format!("class_scores[{i}]"), "outside [0, 1]".into()));
        }
        let sum: f64 = self.class_scores.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Some(("class_scores".into(), format!("sum {sum} differs from 1")));
        }
        None
    }
}

impl From<&ResultRecord> for ProposalRecord {
    fn from(r: &ResultRecord) -> Self {
        ProposalRecord {
            entry_id: r.entry_id,
            center_freq_hz: r.center_freq_hz,
            bandwidth_hz: r.bandwidth_hz,
            confidence: r.confidence,
            extra: BTreeMap::new(),
        }
    }
}

/// Parse a JSON-lines file, validating each record. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned + Validate>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let v: Value = serde_json::from_str(&line).map_err(|e| Error::Json {
            file: path.to_path_buf(),
            line: lineno,
            msg: e.to_string(),
        })?;
        let location = format!("{}:{lineno}", path.display());
        let rec: T = serde_json::from_value(v).map_err(|e| data_error(location.clone(), e))?;
        if let Some((field, msg)) = rec.violation() {
            return Err(Error::schema(location, field, msg));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Write records as canonical JSON lines.
pub fn write_jsonl<T: Serialize + Validate>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (i, r) in records.iter().enumerate() {
        if let Some((field, msg)) = r.violation() {
            return Err(Error::schema(format!("record {i}"), field, msg));
        }
        writeln!(w, "{}", to_canonical_line(r)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_proposals(path: &Path) -> Result<Vec<ProposalRecord>> {
    read_jsonl(path)
}

pub fn write_proposals(path: &Path, records: &[ProposalRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    read_jsonl(path)
}

pub fn write_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    write_jsonl(path, records)
}
