//! Spectrum estimation and the two classical detectors on synthetic captures.

use std::f64::consts::PI;

use rand::SeedableRng;
use wbamc::channel::{self, ChannelSpec, NoiseSpec};
use wbamc::detect::{self, iou, welch_psd, Detector, DetectorConfig, DetectorMethod, Proposal};
use wbamc::modem::ModulationScheme;
use wbamc::synth::{assemble_entry, EntryRng, GenConfig, SignalSpec};
use wbamc::Complex64;

const FS: f64 = 150_000.0;

fn spec(center: f64, sps: usize, m: ModulationScheme, snr: f64) -> SignalSpec {
    let cfg = GenConfig::default();
    SignalSpec {
        modulation: m,
        symbol_rate: FS / sps as f64,
        center_freq: center,
        bandwidth: cfg.class_bandwidth(sps),
        snr_db: snr,
        channel: ChannelSpec::awgn(),
    }
}

fn capture(specs: &[SignalSpec], seed: u64) -> Vec<Complex64> {
    let cfg = GenConfig::default();
    assemble_entry(specs, &cfg, &mut EntryRng::seed_from_u64(seed), 0, seed)
        .unwrap()
        .iq
}

fn as_proposal(s: &SignalSpec) -> Proposal {
    Proposal {
        center_freq: s.center_freq,
        bandwidth: s.bandwidth,
        confidence: 1.0,
    }
}

#[test]
fn welch_localizes_a_tone() {
    let x: Vec<Complex64> = (0..1200)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * 10_000.0 * i as f64 / FS))
        .collect();
    let s = welch_psd(&x, FS, 256, 128).unwrap();
    let peak = (0..s.n_bins()).max_by(|&a, &b| s.psd[a].total_cmp(&s.psd[b])).unwrap();
    assert!((s.bin_freq(peak) - 10_000.0).abs() <= s.bin_hz());
    assert!(welch_psd(&x[..100], FS, 256, 128).is_err());
}

#[test]
fn welch_integrates_to_white_noise_power() {
    let w = channel::awgn(1_000_000, NoiseSpec::new(1.0).unwrap(), &mut EntryRng::seed_from_u64(8));
    let s = welch_psd(&w, FS, 256, 128).unwrap();
    let integral = s.total_power();
    assert!((integral - 1.0).abs() < 0.05, "{integral}");
}

#[test]
fn welch_single_frame_parseval() {
    let x = channel::awgn(512, NoiseSpec::new(2.0).unwrap(), &mut EntryRng::seed_from_u64(2));
    let s = welch_psd(&x, FS, 512, 512).unwrap();
    let w = wbamc::dsp::Window::Hann.periodic(512);
    let u = w.iter().map(|v| v * v).sum::<f64>() / 512.0;
    let windowed = x.iter().zip(&w).map(|(a, b)| (a * b).norm_sqr()).sum::<f64>() / 512.0 / u;
    assert!((s.total_power() - windowed).abs() / windowed < 1e-6);
}

#[test]
fn energy_detector_is_quiet_on_noise() {
    let cfg = DetectorConfig::default();
    let fired = (0..100)
        .filter(|&seed| !cfg.detect(&capture(&[], seed), FS).unwrap().is_empty())
        .count();
    assert!(fired < 10, "{fired} of 100 noise-only entries produced proposals");
}

#[test]
fn energy_detector_finds_one_strong_signal() {
    let cfg = DetectorConfig::default();
    for seed in 0..20 {
        let s = spec(8_000.0, 14, ModulationScheme::Qpsk, 30.0);
        let props = cfg.detect(&capture(std::slice::from_ref(&s), seed), FS).unwrap();
        assert_eq!(props.len(), 1, "seed {seed}: {props:?}");
        let v = iou(&props[0], &as_proposal(&s)).unwrap();
        assert!(v >= 0.7, "seed {seed}: IoU {v}");
    }
}

#[test]
fn energy_detector_separates_two_signals() {
    let cfg = DetectorConfig::default();
    let a = spec(-15_000.0, 16, ModulationScheme::Bpsk, 30.0);
    let b = spec(12_000.0, 12, ModulationScheme::Qam16, 30.0);
    assert!(b.low() - a.high() >= 10_000.0);
    for seed in 0..20 {
        let props = cfg.detect(&capture(&[a.clone(), b.clone()], seed), FS).unwrap();
        assert_eq!(props.len(), 2, "seed {seed}: {props:?}");
    }
}

#[test]
fn energy_detector_splits_touching_signals() {
    let cfg = DetectorConfig::default();
    let a = spec(-8_000.0, 16, ModulationScheme::Qpsk, 30.0);
    let b_bw = GenConfig::default().class_bandwidth(12);
    let b = spec(a.high() + b_bw / 2.0, 12, ModulationScheme::Psk8, 30.0);
    let props = cfg.detect(&capture(&[a.clone(), b.clone()], 3), FS).unwrap();
    assert_eq!(props.len(), 2, "{props:?}");
    for (p, s) in props.iter().zip([&a, &b]) {
        assert!(iou(p, &as_proposal(s)).unwrap() >= 0.5);
    }
}

#[test]
fn covered_bandwidth_shrinks_with_threshold() {
    let cfg = GenConfig::default();
    for seed in 0..10 {
        let e = wbamc::synth::generate_entry(&cfg, seed).unwrap();
        let s = welch_psd(&e.iq, FS, 256, 128).unwrap();
        let mut prev = f64::INFINITY;
        for thr in [3.0, 6.0, 9.0, 12.0, 18.0, 24.0] {
            let d = DetectorConfig {
                threshold_db: thr,
                ..DetectorConfig::default()
            };
            let covered: f64 = detect::detect_energy(&s, &d).iter().map(|p| p.bandwidth).sum();
            assert!(covered <= prev + 1e-6, "seed {seed} thr {thr}: {covered} > {prev}");
            prev = covered;
        }
    }
}

#[test]
fn detector_outputs_are_valid_proposals() {
    let cfg = GenConfig::default();
    for method in [DetectorMethod::Energy, DetectorMethod::MatchedFilter] {
        let d = DetectorConfig {
            method,
            ..DetectorConfig::default()
        };
        for seed in 0..30 {
            let e = wbamc::synth::generate_entry(&cfg, seed).unwrap();
            for p in d.detect(&e.iq, FS).unwrap() {
                p.validate(FS).unwrap();
                assert!((0.0..=1.0).contains(&p.confidence));
            }
        }
    }
}

#[test]
fn matched_filter_reports_the_class_bandwidth() {
    let d = DetectorConfig {
        method: DetectorMethod::MatchedFilter,
        ..DetectorConfig::default()
    };
    for (i, sps) in [16usize, 14, 12].into_iter().enumerate() {
        let s = spec(-3_000.0 + 2_000.0 * i as f64, sps, ModulationScheme::Qam64, 30.0);
        let props = d.detect(&capture(std::slice::from_ref(&s), 40 + i as u64), FS).unwrap();
        let top = props
            .iter()
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
            .expect("a proposal");
        assert_eq!(top.bandwidth, s.bandwidth, "sps {sps}: {props:?}");
    }
}

#[test]
fn matched_filter_is_quiet_on_noise() {
    let d = DetectorConfig {
        method: DetectorMethod::MatchedFilter,
        ..DetectorConfig::default()
    };
    let quiet = (0..100)
        .filter(|&seed| d.detect(&capture(&[], 1000 + seed), FS).unwrap().is_empty())
        .count();
    assert!(quiet >= 90, "only {quiet} of 100 noise-only entries stayed quiet");
}
