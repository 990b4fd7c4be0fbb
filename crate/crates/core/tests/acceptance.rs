//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report lines are always printed.
//! Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hasher};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wbamc::channel::{self, ChannelKind};
use wbamc::classify::{self, extract_slice, predict, softmax_loss_and_grad, train_linear, Model};
use wbamc::datastore::{self, LabelRecord, Manifest, SignalLabel};
use wbamc::detect::{interval_iou, iou, nms, Detector, DetectorConfig, Proposal};
use wbamc::dsp;
use wbamc::eval::{
    average_precision, average_recall, confusion, map_report, Detection, EntryTruth, MatchConfig, Truth,
};
use wbamc::modem::ModulationScheme;
use wbamc::synth::{self, entry_seed, generate_batch, generate_entry, Entry, EntryRng, GenConfig, SignalSpec};
use wbamc::Complex64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn truth_of(s: &SignalSpec) -> Truth {
    Truth {
        center_freq: s.center_freq,
        bandwidth: s.bandwidth,
        modulation: s.modulation,
        snr_db: s.snr_db,
    }
}

fn entry_truths(entries: &[Entry]) -> Vec<EntryTruth> {
    entries
        .iter()
        .map(|e| EntryTruth {
            entry_id: e.entry_id,
            signals: e.truths.iter().map(truth_of).collect(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Metric oracles
// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let a = Proposal {
        center_freq: 0.0,
        bandwidth: 10_000.0,
        confidence: 1.0,
    };
    let b = Proposal {
        center_freq: 2_500.0,
        ..a
    };
    let iou_v = iou(&a, &b).unwrap();
    let iou_ok = (iou_v - 7.5 / 12.5).abs() < 1e-9;

    // Two truths, ranked outcomes TP, FP, TP: 0.5 * 1 + 0.5 * 2/3.
    let ap_ref = 0.5 + 0.5 * (2.0 / 3.0);
    let ap_direct = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
    let t = |c: f64| Truth {
        center_freq: c,
        bandwidth: 10_000.0,
        modulation: ModulationScheme::Qpsk,
        snr_db: 20.0,
    };
    let d = |c: f64, conf: f64| Detection {
        entry_id: 0,
        center_freq: c,
        bandwidth: 10_000.0,
        confidence: conf,
        modulation: None,
    };
    let truths = vec![EntryTruth {
        entry_id: 0,
        signals: vec![t(-20_000.0), t(20_000.0)],
    }];
    let preds = vec![d(-20_000.0, 0.9), d(0.0, 0.8), d(20_000.0, 0.7)];
    let single = MatchConfig {
        iou_thresholds: vec![0.5],
        ..MatchConfig::default()
    };
    let ap_report = map_report(&preds, &truths, &single).unwrap().ap_mean.unwrap();
    let ap_ok = (ap_direct - ap_ref).abs() < 1e-9 && (ap_report - ap_ref).abs() < 1e-9;

    // One truth [0, 100], one prediction [0, 75]: IoU 0.75 clears 6 of 10 thresholds.
    let ar_truth = vec![EntryTruth {
        entry_id: 0,
        signals: vec![Truth {
            center_freq: 50.0,
            bandwidth: 100.0,
            ..t(0.0)
        }],
    }];
    let ar_pred = [Detection {
        center_freq: 37.5,
        bandwidth: 75.0,
        ..d(0.0, 1.0)
    }];
    let ar = average_recall(&ar_pred, &ar_truth, 4, &MatchConfig::default()).unwrap().unwrap();
    let ar_ok = (ar - 0.6).abs() < 1e-9;

    // Ground truth echoed back, on planned layouts of 1000 default entries.
    let cfg = GenConfig::default();
    let planned: Vec<EntryTruth> = (0..1000u64)
        .map(|k| {
            let mut rng = EntryRng::seed_from_u64(entry_seed(cfg.master_seed, k));
            let specs = synth::plan_band(cfg.band_low_hz, cfg.band_high_hz, &cfg, &mut rng);
            EntryTruth {
                entry_id: k,
                signals: specs.iter().map(truth_of).collect(),
            }
        })
        .collect();
    let oracle: Vec<Detection> = planned
        .iter()
        .flat_map(|e| {
            e.signals.iter().map(move |s| Detection {
                entry_id: e.entry_id,
                center_freq: s.center_freq,
                bandwidth: s.bandwidth,
                confidence: 1.0,
                modulation: Some(s.modulation),
            })
        })
        .collect();
    let mut oracle_ok = true;
    for agnostic in [true, false] {
        let cfg = MatchConfig {
            class_agnostic: agnostic,
            ..MatchConfig::default()
        };
        let r = map_report(&oracle, &planned, &cfg).unwrap();
        oracle_ok &= r.ap_mean == Some(1.0) && r.ar_at(6) == Some(1.0);
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(1);
    check(
        iou_ok && ap_ok && ar_ok && oracle_ok && fast,
        format!(
            "IoU {iou_v:.12}, AP {ap_direct:.12}/{ap_report:.12} (ref {ap_ref:.12}), AR {ar:.12}, \
             oracle mAP=AR@6=1: {oracle_ok}, {:.3} s (limit 1 s)",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Generator invariants
// ---------------------------------------------------------------------------

fn hash_entry(h: &mut DefaultHasher, e: &Entry) {
    for s in &e.iq {
        h.write(&(s.re as f32).to_le_bytes());
        h.write(&(s.im as f32).to_le_bytes());
    }
    let label = LabelRecord {
        entry_id: e.entry_id,
        signals: e.truths.iter().map(SignalLabel::from).collect(),
        extra: BTreeMap::new(),
    };
    h.write(datastore::to_canonical_line(&label).unwrap().as_bytes());
}

fn criterion_2() -> Outcome {
    let cfg = GenConfig::default();
    let n = 10_000u64;
    let start = Instant::now();
    let mut first = DefaultHasher::new();
    let mut hist = [0usize; 16];
    let mut layout_errors = 0;
    for k in 0..n {
        let e = generate_entry(&cfg, k).unwrap();
        if synth::check_layout(&e.truths, cfg.band_low_hz, cfg.band_high_hz).is_err() {
            layout_errors += 1;
        }
        for (i, a) in e.truths.iter().enumerate() {
            for b in &e.truths[i + 1..] {
                if a.low().max(b.low()) < a.high().min(b.high()) - synth::FREQ_TOLERANCE_HZ {
                    layout_errors += 1;
                }
            }
        }
        hist[e.truths.len().min(15)] += 1;
        hash_entry(&mut first, &e);
    }
    let elapsed = start.elapsed();

    let mut second = DefaultHasher::new();
    for chunk in (0..n).step_by(500) {
        for e in generate_batch(&cfg, chunk..(chunk + 500).min(n)).unwrap() {
            hash_entry(&mut second, &e);
        }
    }
    let identical = first.finish() == second.finish();

    let max_count = (0..16).rev().find(|&c| hist[c] > 0).unwrap_or(0);
    let non_empty: usize = hist[1..].iter().sum();
    let four_to_six: usize = hist[4..=6].iter().sum();
    let frac = four_to_six as f64 / non_empty as f64;
    let pass = layout_errors == 0 && identical && max_count <= 6 && frac >= 0.80 && elapsed < Duration::from_secs(60);
    check(
        pass,
        format!(
            "{n} entries: layout violations {layout_errors}, regeneration identical {identical}, \
             counts {:?}, max {max_count} (limit 6), 4-6 share {frac:.3} (min 0.80), {:.1} s single-threaded (limit 60 s)",
            &hist[..=6.max(max_count)],
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Physics calibration
// ---------------------------------------------------------------------------

/// Power of `x` inside `[center - bw/2, center + bw/2]`, via the FFT.
fn band_power(x: &[Complex64], center: f64, bw: f64, fs: f64) -> f64 {
    let n = x.len();
    let spec = dsp::fft(x);
    let bin = fs / n as f64;
    spec.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = if *k <= n / 2 { *k as f64 } else { *k as f64 - n as f64 } * bin;
            (f - center).abs() <= bw / 2.0
        })
        .map(|(_, v)| v.norm_sqr())
        .sum::<f64>()
        / (n as f64 * n as f64)
}

/// Normalized cumulants from the exact average over constellation points.
fn constellation_cumulants(m: ModulationScheme) -> (Complex64, f64) {
    let pts = m.constellation();
    let n = pts.len() as f64;
    let m20: Complex64 = pts.iter().map(|s| s * s).sum::<Complex64>() / n;
    let m21: f64 = pts.iter().map(|s| s.norm_sqr()).sum::<f64>() / n;
    let m40: Complex64 = pts.iter().map(|s| s * s * s * s).sum::<Complex64>() / n;
    let m42: f64 = pts.iter().map(|s| s.norm_sqr().powi(2)).sum::<f64>() / n;
    (
        (m40 - 3.0 * m20 * m20) / (m21 * m21),
        (m42 - m20.norm_sqr() - 2.0 * m21 * m21) / (m21 * m21),
    )
}

fn criterion_3() -> Outcome {
    // SNR: rebuild every component of 100 AWGN entries from the same seed and
    // compare each signal's power with the noise that falls in its band.
    let cfg = GenConfig {
        channel_kinds: vec![ChannelKind::AwgnOnly],
        master_seed: 31,
        ..GenConfig::default()
    };
    let mut per_snr: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let mut rebuild_ok = true;
    for k in 0..100u64 {
        let e = generate_entry(&cfg, k).unwrap();
        let mut rng = EntryRng::seed_from_u64(entry_seed(cfg.master_seed, k));
        let specs = synth::plan_band(cfg.band_low_hz, cfg.band_high_hz, &cfg, &mut rng);
        let parts: Vec<Vec<Complex64>> = specs
            .iter()
            .map(|s| synth::synth_signal(s, &cfg, &mut rng).unwrap())
            .collect();
        let noise = channel::awgn(cfg.entry_len, cfg.noise(), &mut rng);
        for i in 0..cfg.entry_len {
            let sum: Complex64 = parts.iter().map(|p| p[i]).sum::<Complex64>() + noise[i];
            rebuild_ok &= (sum - e.iq[i]).norm() <= 1e-6 * (1.0 + sum.norm());
        }
        for (s, p) in specs.iter().zip(&parts) {
            let acc = per_snr.entry(s.snr_db.round() as i64).or_default();
            acc.0 += dsp::mean_power(p);
            acc.1 += band_power(&noise, s.center_freq, s.bandwidth, cfg.fs_hz);
        }
    }
    let mut worst: f64 = 0.0;
    let mut levels = Vec::new();
    for (target, (sig, noise)) in &per_snr {
        let measured = 10.0 * (sig / noise).log10();
        worst = worst.max((measured - *target as f64).abs());
        levels.push(format!("{target}:{measured:.2}"));
    }
    let snr_ok = rebuild_ok && worst <= 0.5;

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut cum_worst: f64 = 0.0;
    let mut cum_detail = Vec::new();
    for m in ModulationScheme::ALL {
        let pts = m.constellation();
        let symbols: Vec<Complex64> = (0..100_000).map(|_| pts[rng.gen_range(0..pts.len())]).collect();
        let est = classify::cumulants(&symbols).unwrap();
        let (c40, c42) = constellation_cumulants(m);
        let err = (est.c40 - c40).norm().max((est.c42 - c42).abs());
        cum_worst = cum_worst.max(err);
        cum_detail.push(format!("{m} C40 {:.3} C42 {:.3}", est.c40.re, est.c42));
    }
    let cum_ok = cum_worst <= 0.05;
    check(
        snr_ok && cum_ok,
        format!(
            "in-band SNR worst error {worst:.3} dB (limit 0.5) [{}], component rebuild exact {rebuild_ok}; \
             cumulant worst error {cum_worst:.4} (limit 0.05) [{}]",
            levels.join(" "),
            cum_detail.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 4-6. Detection and classification trends
// ---------------------------------------------------------------------------

struct SnrSet {
    snr: f64,
    entries: Vec<Entry>,
    truths: Vec<EntryTruth>,
}

fn snr_sets() -> Vec<SnrSet> {
    (0..10)
        .map(|i| {
            let snr = 12.0 + 2.0 * i as f64;
            let cfg = GenConfig {
                channel_kinds: vec![ChannelKind::AwgnOnly],
                snr_grid_db: vec![snr],
                master_seed: 4000 + i as u64,
                ..GenConfig::default()
            };
            let entries = generate_batch(&cfg, 0..200).unwrap();
            let truths = entry_truths(&entries);
            SnrSet { snr, entries, truths }
        })
        .collect()
}

fn detections(set: &SnrSet, det: &DetectorConfig) -> Vec<(u64, Proposal)> {
    set.entries
        .iter()
        .flat_map(|e| det.detect(&e.iq, e.fs).unwrap().into_iter().map(move |p| (e.entry_id, p)))
        .collect()
}

fn criterion_4(sets: &[SnrSet], start: Instant) -> (Outcome, Vec<Vec<(u64, Proposal)>>) {
    let det = DetectorConfig::default();
    let mut aps = Vec::new();
    let mut all = Vec::new();
    for set in sets {
        let props = detections(set, &det);
        let preds: Vec<Detection> = props
            .iter()
            .map(|(id, p)| Detection {
                entry_id: *id,
                center_freq: p.center_freq,
                bandwidth: p.bandwidth,
                confidence: p.confidence,
                modulation: None,
            })
            .collect();
        let r = map_report(&preds, &set.truths, &MatchConfig::default()).unwrap();
        aps.push(r.ap50.unwrap());
        all.push(props);
    }
    let monotone = aps.windows(2).all(|w| w[1] >= w[0] - 0.03);
    let top = *aps.last().unwrap();
    let elapsed = start.elapsed();
    let pass = monotone && top >= 0.85 && elapsed < Duration::from_secs(300);
    let table: Vec<String> = sets.iter().zip(&aps).map(|(s, a)| format!("{}:{a:.3}", s.snr)).collect();
    (
        check(
            pass,
            format!(
                "energy AP@.50 by SNR [{}], non-decreasing within 0.03: {monotone}, at 30 dB {top:.3} (min 0.85), \
                 {:.1} s (limit 300 s)",
                table.join(" "),
                elapsed.as_secs_f64()
            ),
        ),
        all,
    )
}

fn train_model() -> Model {
    let cfg = GenConfig {
        channel_kinds: vec![ChannelKind::AwgnOnly],
        master_seed: 99,
        ..GenConfig::default()
    };
    let entries = generate_batch(&cfg, 0..300).unwrap();
    let examples = classify::training_examples(entries.iter(), cfg.rolloff).unwrap();
    Model::Linear(train_linear(&examples, 2000, 0.5).unwrap().model)
}

fn classify_all(model: &Model, set: &SnrSet, proposals: &[(u64, Proposal)]) -> Vec<Detection> {
    let by_id: BTreeMap<u64, &Entry> = set.entries.iter().map(|e| (e.entry_id, e)).collect();
    proposals
        .iter()
        .map(|(id, p)| {
            let e = by_id[id];
            let out = predict(model, &extract_slice(&e.iq, e.fs, p, 0.35).unwrap()).unwrap();
            Detection {
                entry_id: *id,
                center_freq: p.center_freq,
                bandwidth: p.bandwidth,
                confidence: p.confidence,
                modulation: Some(out.modulation),
            }
        })
        .collect()
}

fn truth_proposals(set: &SnrSet) -> Vec<(u64, Proposal)> {
    set.entries
        .iter()
        .flat_map(|e| classify::truth_proposals(e).into_iter().map(move |(p, _)| (e.entry_id, p)))
        .collect()
}

fn criterion_5(model: &Model, sets: &[SnrSet]) -> (Outcome, Vec<f64>) {
    let mut accs = Vec::new();
    let mut matrix_30 = None;
    let mut bpsk_30 = 0.0;
    for set in sets {
        let results = classify_all(model, set, &truth_proposals(set));
        let c = confusion(&results, &set.truths, 0.5).unwrap();
        accs.push(c.accuracy().unwrap());
        if set.snr == 30.0 {
            bpsk_30 = c.recall(ModulationScheme::Bpsk.index()).unwrap();
            matrix_30 = Some(c.matrix.clone());
        }
    }
    let m = matrix_30.expect("30 dB set");
    let qam = (ModulationScheme::Qam16.index(), ModulationScheme::Qam64.index());
    let pair = |i: usize, j: usize| m[i][j] + m[j][i];
    let qam_pair = pair(qam.0, qam.1);
    let mut other_max = 0;
    for i in 0..5 {
        for j in i + 1..5 {
            if (i, j) != qam {
                other_max = other_max.max(pair(i, j));
            }
        }
    }
    let (acc12, acc30) = (accs[0], *accs.last().unwrap());
    let pass = bpsk_30 >= 0.95 && acc30 >= 0.55 && acc30 > acc12 && qam_pair > other_max;
    (
        check(
            pass,
            format!(
                "ground-truth proposals: BPSK recall@30 dB {bpsk_30:.3} (min 0.95), accuracy@30 dB {acc30:.3} (min 0.55), \
                 accuracy@12 dB {acc12:.3} (< @30 dB: {}), 16QAM<->64QAM confusions {qam_pair} vs largest other pair {other_max}",
                acc30 > acc12
            ),
        ),
        accs,
    )
}

fn criterion_6(model: &Model, sets: &[SnrSet], detected: &[Vec<(u64, Proposal)>], gt_acc: &[f64]) -> Outcome {
    let mut ok = true;
    let mut table = Vec::new();
    for ((set, props), gt) in sets.iter().zip(detected).zip(gt_acc) {
        let results = classify_all(model, set, props);
        let acc = confusion(&results, &set.truths, 0.5).unwrap().accuracy().unwrap();
        ok &= acc <= gt + 0.02;
        table.push(format!("{}:{acc:.3}/{gt:.3}", set.snr));
    }
    check(
        ok,
        format!(
            "end-to-end / ground-truth-proposal accuracy by SNR [{}], detector <= ground truth + 0.02 everywhere: {ok}",
            table.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Property suites
// ---------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures: Vec<&str> = Vec::new();

    let mut iou_ok = true;
    for _ in 0..10_000 {
        let (a, b) = (rng.gen_range(-1e5..1e5), rng.gen_range(1.0..5e4));
        let (c, d) = (rng.gen_range(-1e5..1e5), rng.gen_range(1.0..5e4));
        let x = interval_iou(a, a + b, c, c + d);
        iou_ok &= x == interval_iou(c, c + d, a, a + b) && (0.0..=1.0).contains(&x);
        iou_ok &= interval_iou(a, a + b, a, a + b) == 1.0;
    }
    if !iou_ok {
        failures.push("iou");
    }

    // Random datasets for the ranking properties.
    let mut rank_ok = true;
    let mut ar_ok = true;
    for _ in 0..200 {
        let entries = rng.gen_range(1..=5);
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for id in 0..entries {
            let signals = (0..rng.gen_range(0..4))
                .map(|_| Truth {
                    center_freq: rng.gen_range(0.0..100.0),
                    bandwidth: rng.gen_range(5.0..30.0),
                    modulation: ModulationScheme::Bpsk,
                    snr_db: 20.0,
                })
                .collect();
            truths.push(EntryTruth { entry_id: id, signals });
            for _ in 0..rng.gen_range(0..=6) {
                preds.push(Detection {
                    entry_id: id,
                    center_freq: rng.gen_range(0.0..100.0),
                    bandwidth: rng.gen_range(5.0..30.0),
                    confidence: rng.gen_range(0.0..1.0),
                    modulation: None,
                });
            }
        }
        let cfg = MatchConfig::default();
        let base = map_report(&preds, &truths, &cfg).unwrap();
        let warped: Vec<Detection> = preds
            .iter()
            .map(|p| Detection {
                confidence: p.confidence.powi(3),
                ..*p
            })
            .collect();
        rank_ok &= map_report(&warped, &truths, &cfg).unwrap().ap_mean == base.ap_mean;
        let mut prev = 0.0;
        for k in 1..=6 {
            if let Some(ar) = average_recall(&preds, &truths, k, &cfg).unwrap() {
                ar_ok &= ar + 1e-12 >= prev;
                prev = ar;
            }
        }
    }
    if !rank_ok {
        failures.push("ap-rank-invariance");
    }
    if !ar_ok {
        failures.push("ar-monotone-in-k");
    }

    let mut nms_ok = true;
    for _ in 0..500 {
        let props: Vec<Proposal> = (0..rng.gen_range(0..25))
            .map(|_| Proposal {
                center_freq: rng.gen_range(-1e4..1e4),
                bandwidth: rng.gen_range(10.0..5e3),
                confidence: rng.gen_range(0.0..=1.0),
            })
            .collect();
        let thr = rng.gen_range(0.0..0.95);
        let kept = nms(&props, thr);
        nms_ok &= kept.windows(2).all(|w| w[0].confidence >= w[1].confidence);
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                nms_ok &= iou(&kept[i], &kept[j]).unwrap() <= thr + 1e-12;
            }
        }
    }
    if !nms_ok {
        failures.push("nms");
    }

    let mut worst_rel: f64 = 0.0;
    for _ in 0..5 {
        let w: Vec<Vec<f64>> = (0..5).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..6).map(|j| if j == 5 { 1.0 } else { rng.gen_range(-2.0..2.0) }).collect())
            .collect();
        let ys: Vec<usize> = (0..8).map(|_| rng.gen_range(0..5)).collect();
        let (_, g) = softmax_loss_and_grad(&w, &xs, &ys);
        let h = 1e-5;
        for k in 0..5 {
            for j in 0..6 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[k][j] += h;
                wm[k][j] -= h;
                let fd = (softmax_loss_and_grad(&wp, &xs, &ys).0 - softmax_loss_and_grad(&wm, &xs, &ys).0) / (2.0 * h);
                worst_rel = worst_rel.max((fd - g[k][j]).abs() / fd.abs().max(g[k][j].abs()).max(1e-8));
            }
        }
    }
    if worst_rel >= 1e-4 {
        failures.push("gradient");
    }

    let tmp = std::env::temp_dir().join(format!("wbamc-acceptance-{}", std::process::id()));
    let cfg = GenConfig {
        master_seed: 12,
        entry_count: 50,
        ..GenConfig::default()
    };
    let entries = generate_batch(&cfg, 0..50).unwrap();
    datastore::write_dataset(entries.clone(), &tmp, Manifest::for_config(&cfg)).unwrap();
    let ds = datastore::read_dataset(&tmp).unwrap();
    let round_trip = entries.iter().enumerate().all(|(k, e)| {
        let back = ds.entry(k).unwrap();
        back.truths == e.truths
            && back
                .iq
                .iter()
                .zip(&e.iq)
                .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits())
    });
    let _ = std::fs::remove_dir_all(&tmp);
    if !round_trip {
        failures.push("dataset-round-trip");
    }

    check(
        failures.is_empty(),
        format!(
            "IoU symmetry/range, AP rank invariance, AR monotone in k, NMS postconditions, gradient (worst rel. err \
             {worst_rel:.2e}, limit 1e-4), dataset round trip; failing: {:?}",
            failures
        ),
    )
}

fn main() {
    // `cargo test -- --list` and similar harness probes: nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "metric oracles", criterion_1()));
    results.push((2, "generator invariants", criterion_2()));
    results.push((3, "physics calibration", criterion_3()));
    let start = Instant::now();
    let sets = snr_sets();
    let (c4, detected) = criterion_4(&sets, start);
    results.push((4, "detection trend", c4));
    let model = train_model();
    let (c5, gt_acc) = criterion_5(&model, &sets);
    results.push((5, "classification trends", c5));
    results.push((6, "pipeline composition", criterion_6(&model, &sets, &detected, &gt_acc)));
    results.push((7, "property suites", criterion_7()));

    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n} ({name}): {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
