//! Wideband entry synthesis.
//!
//! A monitored band `[band_low, band_high]` is filled recursively: draw a
//! bandwidth class, place a signal uniformly where it fits, then recurse on
//! the free space to its left and right. Each planned signal is modulated,
//! anti-leak filtered, passed through its channel, scaled to its in-band
//! SNR and mixed to its centre frequency; the entry is the sum plus one AWGN
//! realization.
//!
//! Every entry draws from its own RNG stream derived from
//! `(master_seed, entry_id)`, so a dataset is a pure function of its
//! [`GenConfig`] no matter how entries are scheduled.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, ChannelKind, ChannelSpec, NoiseSpec, DEFAULT_PATH_DELAYS_S, DEFAULT_PATH_GAINS_DB,
};
use crate::datastore::round_sig;
use crate::dsp::{self, Window};
use crate::modem::{self, ModulationScheme, PulseShape};
use crate::{Error, Result};

pub type EntryRng = ChaCha8Rng;

/// Tolerance, in Hz, for interval containment and disjointness checks.
/// Planned frequencies are rounded to 9 significant digits.
pub const FREQ_TOLERANCE_HZ: f64 = 1e-3;

/// Extra samples generated on each side of the capture so filter and
/// pulse transients fall outside it.
const EDGE_PAD: usize = 256;

/// Where the stop probability is tested during recursive band filling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopPolicy {
    /// Only the top-level call may stop (entry-level "empty" probability).
    Root,
    /// Every recursive call may stop.
    EveryBranch,
}

/// How a bandwidth class is drawn for a free interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthDraw {
    /// Uniform over the classes that fit; stop when none fit.
    Fitting,
    /// Uniform over all classes; stop when the drawn one does not fit.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrDraw {
    PerSignal,
    PerEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub fs_hz: f64,
    pub entry_len: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub sps_classes: Vec<usize>,
    pub rolloff: f64,
    pub span_symbols: usize,
    pub p_stop: f64,
    pub stop_policy: StopPolicy,
    pub bandwidth_draw: BandwidthDraw,
    pub guard_hz: f64,
    pub modulations: Vec<ModulationScheme>,
    pub snr_grid_db: Vec<f64>,
    pub snr_draw: SnrDraw,
    pub kfactor_grid: Vec<f64>,
    pub max_doppler_hz: f64,
    pub max_clock_ppm: f64,
    pub channel_kinds: Vec<ChannelKind>,
    pub path_delays_s: Vec<f64>,
    pub path_gains_db: Vec<f64>,
    pub noise_power: f64,
    pub antileak_order: usize,
    pub antileak_margin: f64,
    pub master_seed: u64,
    pub entry_count: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            fs_hz: 150_000.0,
            entry_len: 1200,
            band_low_hz: -40_000.0,
            band_high_hz: 40_000.0,
            sps_classes: vec![16, 14, 12],
            rolloff: 0.35,
            span_symbols: 12,
            p_stop: 0.15,
            stop_policy: StopPolicy::Root,
            bandwidth_draw: BandwidthDraw::Fitting,
            guard_hz: 0.0,
            modulations: ModulationScheme::ALL.to_vec(),
            snr_grid_db: (0..10).map(|i| 12.0 + 2.0 * i as f64).collect(),
            snr_draw: SnrDraw::PerSignal,
            kfactor_grid: (1..=10).map(f64::from).collect(),
            max_doppler_hz: 4.0,
            max_clock_ppm: 5.0,
            channel_kinds: vec![ChannelKind::Rayleigh, ChannelKind::Rician],
            path_delays_s: DEFAULT_PATH_DELAYS_S.to_vec(),
            path_gains_db: DEFAULT_PATH_GAINS_DB.to_vec(),
            noise_power: 1.0,
            antileak_order: 127,
            antileak_margin: 1.05,
            master_seed: 0,
            entry_count: 1000,
        }
    }
}

impl GenConfig {
    pub fn class_bandwidth(&self, sps: usize) -> f64 {
        round_sig(self.fs_hz / sps as f64 * (1.0 + self.rolloff))
    }

    pub fn class_bandwidths(&self) -> Vec<f64> {
        self.sps_classes.iter().map(|&s| self.class_bandwidth(s)).collect()
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            noise_power: self.noise_power,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        if !(self.fs_hz > 0.0) {
            return bad(format!("fs_hz {} must be positive", self.fs_hz));
        }
        if self.entry_len == 0 {
            return bad("entry_len must be positive".into());
        }
        if !(self.band_low_hz < self.band_high_hz) {
            return bad(format!(
                "band_low_hz {} must be below band_high_hz {}",
                self.band_low_hz, self.band_high_hz
            ));
        }
        if self.band_low_hz < -self.fs_hz / 2.0 || self.band_high_hz > self.fs_hz / 2.0 {
            return bad("monitored band must lie within [-fs/2, fs/2]".into());
        }
        if self.sps_classes.is_empty() || self.sps_classes.iter().any(|&s| s < 2) {
            return bad("sps_classes must be non-empty with every class >= 2".into());
        }
        PulseShape::new(self.rolloff, self.span_symbols, self.sps_classes[0])?;
        let width = self.band_high_hz - self.band_low_hz;
        if let Some(w) = self.class_bandwidths().into_iter().find(|&w| w > width) {
            return bad(format!("class bandwidth {w} Hz exceeds the monitored band width {width} Hz"));
        }
        if !(0.0..1.0).contains(&self.p_stop) {
            return bad(format!("p_stop {} outside [0, 1)", self.p_stop));
        }
        if !(self.guard_hz >= 0.0) {
            return bad("guard_hz must be >= 0".into());
        }
        if self.modulations.is_empty() {
            return bad("modulations must be non-empty".into());
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid_db must be non-empty and finite".into());
        }
        if self.channel_kinds.is_empty() {
            return bad("channel_kinds must be non-empty".into());
        }
        if self.channel_kinds.contains(&ChannelKind::Rician)
            && (self.kfactor_grid.is_empty() || self.kfactor_grid.iter().any(|&k| !(k >= 0.0)))
        {
            return bad("kfactor_grid must be non-empty and >= 0 when RICIAN is enabled".into());
        }
        if !(self.max_doppler_hz >= 0.0) || !(self.max_clock_ppm >= 0.0) {
            return bad("max_doppler_hz and max_clock_ppm must be >= 0".into());
        }
        NoiseSpec::new(self.noise_power)?;
        if self.antileak_order == 0 || !(self.antileak_margin > 0.0) {
            return bad("antileak_order and antileak_margin must be positive".into());
        }
        self.template_channel(ChannelKind::AwgnOnly).validate()
    }

    fn template_channel(&self, kind: ChannelKind) -> ChannelSpec {
        ChannelSpec {
            kind,
            path_delays: self.path_delays_s.clone(),
            path_gains_db: self.path_gains_db.clone(),
            k_factor: 0.0,
            max_doppler: 0.0,
            clock_offset_ppm: 0.0,
        }
    }
}

/// One transmitted signal's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub modulation: ModulationScheme,
    pub symbol_rate: f64,
    pub center_freq: f64,
    pub bandwidth: f64,
    pub snr_db: f64,
    pub channel: ChannelSpec,
}

impl SignalSpec {
    pub fn low(&self) -> f64 {
        self.center_freq - self.bandwidth / 2.0
    }

    pub fn high(&self) -> f64 {
        self.center_freq + self.bandwidth / 2.0
    }
}

/// One wideband capture and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub entry_id: u64,
    pub seed: u64,
    pub fs: f64,
    pub iq: Vec<Complex64>,
    pub truths: Vec<SignalSpec>,
}

impl Entry {
    /// `2 x L` view: row 0 holds the in-phase samples, row 1 the quadrature.
    pub fn iq_matrix(&self) -> [Vec<f64>; 2] {
        [
            self.iq.iter().map(|s| s.re).collect(),
            self.iq.iter().map(|s| s.im).collect(),
        ]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of entry `index` under `master_seed`.
pub fn entry_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn entry_rng(master_seed: u64, index: u64) -> EntryRng {
    EntryRng::seed_from_u64(entry_seed(master_seed, index))
}

/// Recursively plan non-overlapping signals inside `[f_low, f_high]`.
pub fn plan_band<R: Rng + ?Sized>(f_low: f64, f_high: f64, cfg: &GenConfig, rng: &mut R) -> Vec<SignalSpec> {
    let entry_snr = match cfg.snr_draw {
        SnrDraw::PerEntry => Some(*cfg.snr_grid_db.choose(rng).expect("validated non-empty")),
        SnrDraw::PerSignal => None,
    };
    let mut out = Vec::new();
    if f_low <= f_high {
        fill(f_low, f_high, true, cfg, entry_snr, rng, &mut out);
    }
    out
}

fn fill<R: Rng + ?Sized>(
    lo: f64,
    hi: f64,
    root: bool,
    cfg: &GenConfig,
    entry_snr: Option<f64>,
    rng: &mut R,
    out: &mut Vec<SignalSpec>,
) {
    if (root || cfg.stop_policy == StopPolicy::EveryBranch) && rng.gen::<f64>() < cfg.p_stop {
        return;
    }
    let free = hi - lo;
    let sps = match cfg.bandwidth_draw {
        BandwidthDraw::Any => {
            let sps = *cfg.sps_classes.choose(rng).expect("validated non-empty");
            if cfg.class_bandwidth(sps) > free {
                return;
            }
            sps
        }
        BandwidthDraw::Fitting => {
            let fitting: Vec<usize> = cfg
                .sps_classes
                .iter()
                .copied()
                .filter(|&s| cfg.class_bandwidth(s) <= free)
                .collect();
            match fitting.choose(rng) {
                Some(&s) => s,
                None => return,
            }
        }
    };
    let bandwidth = cfg.class_bandwidth(sps);
    let half = bandwidth / 2.0;
    let center = round_sig(rng.gen_range(lo + half..=hi - half)).clamp(lo + half, hi - half);
    let modulation = *cfg.modulations.choose(rng).expect("validated non-empty");
    let snr_db = match entry_snr {
        Some(s) => s,
        None => *cfg.snr_grid_db.choose(rng).expect("validated non-empty"),
    };
    let kind = *cfg.channel_kinds.choose(rng).expect("validated non-empty");
    let mut channel = cfg.template_channel(kind);
    if kind == ChannelKind::Rician {
        channel.k_factor = *cfg.kfactor_grid.choose(rng).expect("validated non-empty");
    }
    if kind != ChannelKind::AwgnOnly {
        channel.max_doppler = cfg.max_doppler_hz;
    }
    channel.clock_offset_ppm = round_sig(rng.gen::<f64>() * cfg.max_clock_ppm);
    out.push(SignalSpec {
        modulation,
        symbol_rate: round_sig(cfg.fs_hz / sps as f64),
        center_freq: center,
        bandwidth,
        snr_db,
        channel,
    });
    let (s_low, s_high) = (center - half - cfg.guard_hz, center + half + cfg.guard_hz);
    fill(lo, s_low, false, cfg, entry_snr, rng, out);
    fill(s_high, hi, false, cfg, entry_snr, rng, out);
}

fn samples_per_symbol(spec: &SignalSpec, fs: f64) -> Result<usize> {
    let sps = (fs / spec.symbol_rate).round();
    if !(sps >= 2.0) || ((fs / sps) - spec.symbol_rate).abs() > 1e-6 * spec.symbol_rate {
        return Err(Error::Param(format!(
            "symbol rate {} Hz is not fs / integer (>= 2) at fs {} Hz",
            spec.symbol_rate, fs
        )));
    }
    Ok(sps as usize)
}

/// Received contribution of one signal, `entry_len` samples at `cfg.fs_hz`.
pub fn synth_signal<R: Rng + ?Sized>(spec: &SignalSpec, cfg: &GenConfig, rng: &mut R) -> Result<Vec<Complex64>> {
    let fs = cfg.fs_hz;
    let sps = samples_per_symbol(spec, fs)?;
    spec.channel.validate()?;
    let shape = PulseShape::new(cfg.rolloff, cfg.span_symbols, sps)?;

    let timing = rng.gen_range(0..sps);
    let phase = rng.gen::<f64>() * 2.0 * PI;
    let total = cfg.entry_len + 2 * EDGE_PAD + sps;
    let n_symbols = total.div_ceil(sps);
    let bits: Vec<u8> = (0..n_symbols * spec.modulation.bits_per_symbol())
        .map(|_| rng.gen_range(0..=1u8))
        .collect();
    let symbols = modem::map_symbols(&bits, spec.modulation)?;
    let mut x = modem::modulate(&symbols, &shape, fs)?.samples;
    let rot = Complex64::from_polar(1.0, phase);
    x.iter_mut().for_each(|s| *s *= rot);

    let antileak = dsp::lowpass_taps(
        cfg.antileak_order,
        spec.bandwidth / 2.0 * cfg.antileak_margin,
        fs,
        Window::Hamming,
    );
    let mut x = dsp::filter_same(&x, &antileak);
    if spec.channel.kind != ChannelKind::AwgnOnly {
        x = channel::apply_multipath(&x, &spec.channel, fs, rng)?;
    }
    x = channel::apply_clock_offset(&x, spec.channel.clock_offset_ppm, spec.center_freq, fs);

    let start = EDGE_PAD + timing;
    let capture = &x[start..start + cfg.entry_len];
    let scaled = channel::scale_to_snr(capture, spec.snr_db, cfg.noise(), spec.bandwidth, fs)?;
    Ok(dsp::mix(&scaled.samples, spec.center_freq, fs))
}

/// Check pairwise disjointness (touching allowed) and band containment.
pub fn check_layout(specs: &[SignalSpec], band_low: f64, band_high: f64) -> Result<()> {
    for s in specs {
        if s.low() < band_low - FREQ_TOLERANCE_HZ || s.high() > band_high + FREQ_TOLERANCE_HZ {
            return Err(Error::Invariant(format!(
                "signal [{}, {}] Hz leaves the band [{band_low}, {band_high}] Hz",
                s.low(),
                s.high()
            )));
        }
    }
    let mut sorted: Vec<&SignalSpec> = specs.iter().collect();
    sorted.sort_by(|a, b| a.low().total_cmp(&b.low()));
    for w in sorted.windows(2) {
        if w[1].low() < w[0].high() - FREQ_TOLERANCE_HZ {
            return Err(Error::Invariant(format!(
                "signals at {} Hz and {} Hz overlap",
                w[0].center_freq, w[1].center_freq
            )));
        }
    }
    Ok(())
}

/// Round every sample to single precision, the on-disk sample format.
pub fn quantize_f32(x: &mut [Complex64]) {
    for s in x {
        *s = Complex64::new(s.re as f32 as f64, s.im as f32 as f64);
    }
}

/// Superpose the planned signals and one noise realization.
pub fn assemble_entry<R: Rng + ?Sized>(
    specs: &[SignalSpec],
    cfg: &GenConfig,
    rng: &mut R,
    entry_id: u64,
    seed: u64,
) -> Result<Entry> {
    check_layout(specs, cfg.band_low_hz, cfg.band_high_hz)?;
    let mut iq = vec![Complex64::new(0.0, 0.0); cfg.entry_len];
    for spec in specs {
        let sig = synth_signal(spec, cfg, rng)?;
        iq.iter_mut().zip(sig).for_each(|(a, b)| *a += b);
    }
    let mut iq = channel::add_awgn(&iq, cfg.noise(), rng);
    quantize_f32(&mut iq);
    Ok(Entry {
        entry_id,
        seed,
        fs: cfg.fs_hz,
        iq,
        truths: specs.to_vec(),
    })
}

/// Entry `index` of the dataset described by `cfg`.
pub fn generate_entry(cfg: &GenConfig, index: u64) -> Result<Entry> {
    let seed = entry_seed(cfg.master_seed, index);
    let mut rng = EntryRng::seed_from_u64(seed);
    let specs = plan_band(cfg.band_low_hz, cfg.band_high_hz, cfg, &mut rng);
    assemble_entry(&specs, cfg, &mut rng, index, seed)
}

/// Lazily generate `cfg.entry_count` entries in order.
pub fn generate_dataset(cfg: &GenConfig) -> Result<impl Iterator<Item = Result<Entry>> + '_> {
    cfg.validate()?;
    Ok((0..cfg.entry_count as u64).map(move |k| generate_entry(cfg, k)))
}

/// Generate entries `indices` on the current rayon pool, returned in order.
pub fn generate_batch(cfg: &GenConfig, indices: std::ops::Range<u64>) -> Result<Vec<Entry>> {
    cfg.validate()?;
    indices.into_par_iter().map(|k| generate_entry(cfg, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_class_bandwidths() {
        let cfg = GenConfig::default();
        let bw = cfg.class_bandwidths();
        assert!((bw[0] - 12_656.25).abs() < 1e-6);
        assert!((bw[1] - 14_464.285_7).abs() < 1e-3);
        assert!((bw[2] - 16_875.0).abs() < 1e-6);
        cfg.validate().unwrap();
    }

    #[test]
    fn narrow_band_plans_nothing() {
        let cfg = GenConfig {
            p_stop: 0.0,
            ..GenConfig::default()
        };
        let mut rng = entry_rng(1, 0);
        assert!(plan_band(0.0, 10_000.0, &cfg, &mut rng).is_empty());
    }

    #[test]
    fn plan_is_deterministic() {
        let cfg = GenConfig::default();
        let a = plan_band(-40e3, 40e3, &cfg, &mut entry_rng(5, 3));
        let b = plan_band(-40e3, 40e3, &cfg, &mut entry_rng(5, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn per_entry_snr_is_shared() {
        let cfg = GenConfig {
            snr_draw: SnrDraw::PerEntry,
            p_stop: 0.0,
            ..GenConfig::default()
        };
        for k in 0..20 {
            let plan = plan_band(-40e3, 40e3, &cfg, &mut entry_rng(2, k));
            assert!(plan.windows(2).all(|w| w[0].snr_db == w[1].snr_db));
        }
    }

    #[test]
    fn guard_band_is_respected() {
        let cfg = GenConfig {
            guard_hz: 2_000.0,
            p_stop: 0.0,
            ..GenConfig::default()
        };
        for k in 0..200 {
            let mut plan = plan_band(-40e3, 40e3, &cfg, &mut entry_rng(4, k));
            plan.sort_by(|a, b| a.low().total_cmp(&b.low()));
            for w in plan.windows(2) {
                assert!(w[1].low() - w[0].high() >= 2_000.0 - FREQ_TOLERANCE_HZ);
            }
        }
    }

    #[test]
    fn overlapping_specs_rejected() {
        let cfg = GenConfig::default();
        let mut plan = plan_band(-40e3, 40e3, &GenConfig { p_stop: 0.0, ..cfg.clone() }, &mut entry_rng(0, 0));
        assert!(!plan.is_empty());
        let mut dup = plan[0].clone();
        dup.center_freq += 100.0;
        plan.push(dup);
        let err = assemble_entry(&plan, &cfg, &mut entry_rng(0, 1), 0, 0).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig { band_low_hz: 50e3, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { band_high_hz: 80e3, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { p_stop: 1.0, ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig { sps_classes: vec![], ..GenConfig::default() }.validate().is_err());
        assert!(GenConfig {
            band_low_hz: -5e3,
            band_high_hz: 5e3,
            ..GenConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn config_json_defaults_fill_missing_fields() {
        let cfg: GenConfig = serde_json::from_str(r#"{"master_seed": 7, "entry_count": 3}"#).unwrap();
        assert_eq!(cfg.master_seed, 7);
        assert_eq!(cfg.fs_hz, 150_000.0);
        assert!(serde_json::from_str::<GenConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn iq_matrix_shape() {
        let cfg = GenConfig::default();
        let e = generate_entry(&cfg, 0).unwrap();
        let m = e.iq_matrix();
        assert_eq!(m[0].len(), cfg.entry_len);
        assert_eq!(m[1].len(), cfg.entry_len);
        assert_eq!(m[0][5], e.iq[5].re);
        assert_eq!(m[1][5], e.iq[5].im);
    }

    #[test]
    fn entry_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|k| entry_seed(42, k)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(entry_seed(1, 0), entry_seed(2, 0));
    }
}
