//! Digital modulation: Gray-labelled constellations for the five supported
//! schemes and root-raised-cosine pulse shaping.
//!
//! Gray tables (bits are consumed most significant first):
//!
//! | scheme | label -> point |
//! |--------|----------------|
//! | BPSK   | `0 -> +1`, `1 -> -1` |
//! | QPSK   | `b0 b1 -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)` |
//! | 8PSK   | `l -> exp(j pi k / 4)` where `k` is the Gray rank of `l` (`l = k ^ (k >> 1)`) |
//! | 16QAM  | first 2 bits pick the I level, last 2 the Q level |
//! | 64QAM  | first 3 bits pick the I level, last 3 the Q level |
//!
//! For the square QAMs each axis label `l` selects level `2k - (m - 1)` with
//! `l = k ^ (k >> 1)` and `m = sqrt(M)`, then the whole constellation is scaled
//! to unit average energy.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModulationScheme {
    #[serde(rename = "BPSK")]
    Bpsk,
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "8PSK", alias = "PSK8")]
    Psk8,
    #[serde(rename = "16QAM", alias = "QAM16")]
    Qam16,
    #[serde(rename = "64QAM", alias = "QAM64")]
    Qam64,
}

impl ModulationScheme {
    /// Canonical class order, used for score vectors and confusion matrices.
    pub const ALL: [ModulationScheme; 5] = [
        ModulationScheme::Bpsk,
        ModulationScheme::Qpsk,
        ModulationScheme::Psk8,
        ModulationScheme::Qam16,
        ModulationScheme::Qam64,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationScheme::Bpsk => "BPSK",
            ModulationScheme::Qpsk => "QPSK",
            ModulationScheme::Psk8 => "8PSK",
            ModulationScheme::Qam16 => "16QAM",
            ModulationScheme::Qam64 => "64QAM",
        }
    }

    pub fn order(self) -> usize {
        match self {
            ModulationScheme::Bpsk => 2,
            ModulationScheme::Qpsk => 4,
            ModulationScheme::Psk8 => 8,
            ModulationScheme::Qam16 => 16,
            ModulationScheme::Qam64 => 64,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        self.order().trailing_zeros() as usize
    }

    /// Constellation indexed by bit label.
    pub fn constellation(self) -> Vec<Complex64> {
        (0..self.order()).map(|label| self.point(label)).collect()
    }

    fn point(self, label: usize) -> Complex64 {
        match self {
            ModulationScheme::Bpsk => {
                if label == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(-1.0, 0.0)
                }
            }
            ModulationScheme::Qpsk => {
                let i = 1.0 - 2.0 * ((label >> 1) & 1) as f64;
                let q = 1.0 - 2.0 * (label & 1) as f64;
                Complex64::new(i, q) * FRAC_1_SQRT_2
            }
            ModulationScheme::Psk8 => {
                let k = gray_rank(label);
                Complex64::from_polar(1.0, PI * k as f64 / 4.0)
            }
            ModulationScheme::Qam16 => square_qam(label, 2),
            ModulationScheme::Qam64 => square_qam(label, 3),
        }
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BPSK" => Ok(ModulationScheme::Bpsk),
            "QPSK" => Ok(ModulationScheme::Qpsk),
            "8PSK" | "PSK8" => Ok(ModulationScheme::Psk8),
            "16QAM" | "QAM16" => Ok(ModulationScheme::Qam16),
            "64QAM" | "QAM64" => Ok(ModulationScheme::Qam64),
            other => Err(Error::Param(format!("unknown modulation `{other}`"))),
        }
    }
}

/// Position `k` whose Gray code `k ^ (k >> 1)` equals `label`.
fn gray_rank(label: usize) -> usize {
    let mut k = label;
    let mut shift = label >> 1;
    while shift != 0 {
        k ^= shift;
        shift >>= 1;
    }
    k
}

fn square_qam(label: usize, bits_per_axis: usize) -> Complex64 {
    let m = 1usize << bits_per_axis;
    let mask = m - 1;
    let level = |l: usize| 2.0 * gray_rank(l) as f64 - (m - 1) as f64;
    let i = level((label >> bits_per_axis) & mask);
    let q = level(label & mask);
    // Mean energy of an m x m grid with odd integer levels.
    let energy = 2.0 * ((m * m) as f64 - 1.0) / 3.0;
    Complex64::new(i, q) / energy.sqrt()
}

/// Map a bit stream (values 0/1, MSB first per symbol) to constellation points.
pub fn map_symbols(bits: &[u8], scheme: ModulationScheme) -> Result<Vec<Complex64>> {
    let bps = scheme.bits_per_symbol();
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::BitLength {
            len: bits.len(),
            bits_per_symbol: bps,
        });
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::Param(format!("bit value {b} is not 0 or 1")));
    }
    let table = scheme.constellation();
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| {
            let label = chunk.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            table[label]
        })
        .collect())
}

/// Root-raised-cosine pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub rolloff: f64,
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl PulseShape {
    pub fn new(rolloff: f64, span_symbols: usize, samples_per_symbol: usize) -> Result<Self> {
        let shape = PulseShape {
            rolloff,
            span_symbols,
            samples_per_symbol,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::Param(format!("rolloff {} outside (0, 1]", self.rolloff)));
        }
        if self.span_symbols < 6 {
            return Err(Error::Param(format!(
                "span of {} symbols is below the minimum of 6",
                self.span_symbols
            )));
        }
        if self.samples_per_symbol == 0 {
            return Err(Error::Param("samples_per_symbol must be positive".into()));
        }
        Ok(())
    }

    pub fn num_taps(&self) -> usize {
        self.span_symbols * self.samples_per_symbol + 1
    }

    /// Symmetric, unit-energy root-raised-cosine taps.
    pub fn rrc_taps(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let sps = self.samples_per_symbol as f64;
        let half = (self.num_taps() / 2) as isize;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|i| rrc_impulse(i as f64 / sps, self.rolloff))
            .collect();
        let energy: f64 = taps.iter().map(|t| t * t).sum();
        let g = energy.sqrt().recip();
        taps.iter_mut().for_each(|t| *t *= g);
        Ok(taps)
    }
}

/// Unnormalized RRC impulse response at `t` symbol periods.
fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let x = 4.0 * beta * t;
    if (1.0 - x * x).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * t * (1.0 - beta)).sin() + x * (PI * t * (1.0 + beta)).cos()) / (PI * t * (1.0 - x * x))
}

/// Pulse-shaped baseband waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub symbol_rate: f64,
    pub occupied_bandwidth: f64,
}

/// Upsample, RRC-filter and trim the group delay, without any power
/// normalization. Output length is `symbols.len() * samples_per_symbol`.
pub fn shape_symbols(symbols: &[Complex64], shape: &PulseShape) -> Result<Vec<Complex64>> {
    if symbols.is_empty() {
        return Err(Error::Empty("symbol sequence"));
    }
    let taps = shape.rrc_taps()?;
    let sps = shape.samples_per_symbol;
    let delay = (taps.len() - 1) / 2;
    let len = symbols.len() * sps;
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for (n, y) in out.iter_mut().enumerate() {
        // Symbol k contributes taps[n + delay - k * sps] when that index is valid.
        let centre = n + delay;
        let k_lo = centre.saturating_sub(taps.len() - 1).div_ceil(sps);
        let k_hi = (centre / sps).min(symbols.len() - 1);
        for k in k_lo..=k_hi {
            *y += symbols[k] * taps[centre - k * sps];
        }
    }
    Ok(out)
}

/// Pulse-shape `symbols` and renormalize to unit mean power.
pub fn modulate(symbols: &[Complex64], shape: &PulseShape, fs: f64) -> Result<BasebandSignal> {
    let mut samples = shape_symbols(symbols, shape)?;
    if crate::dsp::normalize_power(&mut samples).is_none() {
        return Err(Error::Degenerate("shaped waveform has zero power".into()));
    }
    let symbol_rate = fs / shape.samples_per_symbol as f64;
    Ok(BasebandSignal {
        samples,
        symbol_rate,
        occupied_bandwidth: symbol_rate * (1.0 + shape.rolloff),
    })
}
