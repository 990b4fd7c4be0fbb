//! Self-contained SVG line charts and CSV tables from an evaluation report.
//!
//! CSV files (header row first, empty cell = undefined metric):
//!
//! - `summary.csv`: `metric,value`
//! - `pr_curves.csv`: `iou_threshold,class,rank,recall,precision,confidence`
//! - `by_snr.csv`: `snr_db,truths,ap50,recall50,accuracy`
//!
//! SVG charts: `pr_curves.svg` (curves at IoU 0.50 and 0.75),
//! `ap_vs_snr.svg` (AP@.50 and recall@.50) and, for joint reports,
//! `accuracy_vs_snr.svg`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use wbamc::eval::EvalReport;

use crate::{data, Failure};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];
/// IoU thresholds whose PR curves are drawn.
const PLOTTED_THRESHOLDS: [f64; 2] = [0.5, 0.75];

/// One named polyline.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn tick_label(v: f64) -> String {
    if v.fract().abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

impl Chart<'_> {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = self.x_range;
        let (y0, y1) = self.y_range;
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + if x1 > x0 { (x - x0) / (x1 - x0) * pw } else { pw / 2.0 };
        let sy = |y: f64| MARGIN_TOP + ph - if y1 > y0 { (y - y0) / (y1 - y0) * ph } else { ph / 2.0 };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(self.title)
        );
        // grid and tick labels
        for t in ticks(x0, x1, 5) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##,
                MARGIN_TOP + ph
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_TOP + ph + 16.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1, 5) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
                MARGIN_LEFT + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            escape(self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if pts.len() == 1 {
                let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, sx(series.points[0].0), sy(series.points[0].1));
            } else if !pts.is_empty() {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
            let lx = MARGIN_LEFT + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_csv(r: &EvalReport) -> String {
    let mut rows = vec![
        ("ap_mean".to_string(), r.ap_mean),
        ("ap50".into(), r.ap50),
        ("ap75".into(), r.ap75),
        ("ap_small".into(), r.ap_small),
        ("ap_medium".into(), r.ap_medium),
        ("ap_large".into(), r.ap_large),
    ];
    rows.extend(r.ar.iter().map(|(k, v)| (format!("ar@{k}"), *v)));
    rows.extend([
        ("ar_small".into(), r.ar_small),
        ("ar_medium".into(), r.ar_medium),
        ("ar_large".into(), r.ar_large),
        ("accuracy".into(), r.accuracy),
    ]);
    rows.extend(r.per_class_ap.iter().map(|(k, v)| (format!("ap_{k}"), *v)));
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{}", cell(v));
    }
    s
}

fn pr_csv(r: &EvalReport) -> String {
    let mut s = String::from("iou_threshold,class,rank,recall,precision,confidence\n");
    for c in &r.pr_curves {
        for (i, p) in c.points.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.iou_threshold,
                c.class,
                i + 1,
                p.recall,
                p.precision,
                p.confidence
            );
        }
    }
    s
}

fn snr_csv(r: &EvalReport) -> String {
    let mut s = String::from("snr_db,truths,ap50,recall50,accuracy\n");
    for b in &r.by_snr {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            b.snr_db,
            b.truths,
            cell(b.ap50),
            cell(b.recall50),
            cell(b.accuracy)
        );
    }
    s
}

fn snr_range(r: &EvalReport) -> (f64, f64) {
    let lo = r.by_snr.iter().map(|b| b.snr_db).fold(f64::INFINITY, f64::min);
    let hi = r.by_snr.iter().map(|b| b.snr_db).fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn snr_series(r: &EvalReport, name: &str, f: impl Fn(&wbamc::eval::SnrBreakdown) -> Option<f64>) -> Series {
    Series {
        name: name.to_string(),
        points: r.by_snr.iter().filter_map(|b| f(b).map(|v| (b.snr_db, v))).collect(),
    }
}

fn charts(r: &EvalReport) -> Vec<(&'static str, Chart<'static>)> {
    let pr_series = r
        .pr_curves
        .iter()
        .filter(|c| PLOTTED_THRESHOLDS.iter().any(|t| (c.iou_threshold - t).abs() < 1e-9))
        .map(|c| {
            // Step shape: precision holds until the next recall level.
            let mut points = vec![(0.0, c.points.first().map_or(1.0, |p| p.precision))];
            points.extend(c.points.iter().map(|p| (p.recall, p.precision)));
            Series {
                name: format!("{} @{:.2}", c.class, c.iou_threshold),
                points,
            }
        })
        .collect();
    let mut out = vec![
        (
            "pr_curves.svg",
            Chart {
                title: "Precision-recall",
                x_label: "recall",
                y_label: "precision",
                x_range: (0.0, 1.0),
                y_range: (0.0, 1.0),
                series: pr_series,
            },
        ),
        (
            "ap_vs_snr.svg",
            Chart {
                title: "Detection vs SNR",
                x_label: "SNR (dB)",
                y_label: "metric at IoU 0.50",
                x_range: snr_range(r),
                y_range: (0.0, 1.0),
                series: vec![
                    snr_series(r, "AP@.50", |b| b.ap50),
                    snr_series(r, "recall@.50", |b| b.recall50),
                ],
            },
        ),
    ];
    if r.by_snr.iter().any(|b| b.accuracy.is_some()) {
        out.push((
            "accuracy_vs_snr.svg",
            Chart {
                title: "Classification accuracy vs SNR",
                x_label: "SNR (dB)",
                y_label: "accuracy",
                x_range: snr_range(r),
                y_range: (0.0, 1.0),
                series: vec![snr_series(r, "accuracy", |b| b.accuracy)],
            },
        ));
    }
    out
}

/// Write the requested artifacts into `dir`; returns the written paths.
pub fn render(r: &EvalReport, dir: &Path, svg: bool, csv: bool) -> Result<Vec<PathBuf>, Failure> {
    if r.is_empty() {
        return Err(data("report holds no predictions and no ground truth; nothing to plot"));
    }
    std::fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<(String, String)> = Vec::new();
    if csv {
        files.push(("summary.csv".into(), summary_csv(r)));
        files.push(("pr_curves.csv".into(), pr_csv(r)));
        files.push(("by_snr.csv".into(), snr_csv(r)));
    }
    if svg {
        files.extend(charts(r).into_iter().map(|(name, c)| (name.to_string(), c.to_svg())));
    }
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| data(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
