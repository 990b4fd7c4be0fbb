//! Wideband multi-signal toolkit: synthesize captures holding several
//! coexisting modulated signals, detect their occupied bands, classify each
//! detected band's modulation, and score the two-stage pipeline with
//! interval IoU / AP / AR metrics.
//!
//! Module map:
//!
//! - [`modem`]: constellations, Gray mapping, root-raised-cosine shaping
//! - [`channel`]: multipath fading, clock offset, SNR calibration, AWGN
//! - [`synth`]: recursive band filling and entry assembly
//! - [`datastore`]: on-disk dataset / proposal / result / report formats
//! - [`detect`]: Welch PSD, energy and matched-filter band detectors, NMS
//! - [`classify`]: per-proposal extraction, cumulant features, classifiers
//! - [`eval`]: matching, AP / mAP / AR, confusion matrices

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod classify;
pub mod datastore;
pub mod detect;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod modem;
pub mod synth;

pub use error::{Error, Result};
pub use num_complex::Complex64;
