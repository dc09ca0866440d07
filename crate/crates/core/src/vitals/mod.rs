//! Optical pulse sensing: synthetic two-LED PPG streams, the sensor FIFO,
//! beat detection and the bpm / SpO2 estimators.
//!
//! The red (660 nm) and infrared (940 nm) channels are sampled by a 16-bit
//! ADC, so every count lives in `0..=65535`. Heart rate is taken from the IR
//! channel; SpO2 from the ratio-of-ratios of both channels.

mod detect;
mod fifo;
mod synth;

pub use detect::{
    assess_window, compute_bpm, compute_spo2, detect_beats, spo2_from_ratio, BpmEstimate, DetectionParams,
    Spo2Estimate, MIN_BPM_WINDOW_MS,
};
pub use fifo::{SampleFifo, DEFAULT_FIFO_CAPACITY};
pub use synth::{synthesize_ppg, PpgSynth, PULSE_WIDTH_MS};

use serde::{Deserialize, Serialize};
use std::io;
use thiserror::Error;

/// Default sensor sample rate.
pub const DEFAULT_SAMPLE_HZ: u32 = 100;

/// Upper bound of the 16-bit ADC.
pub const ADC_MAX: u16 = u16::MAX;

#[derive(Debug, Error)]
pub enum VitalsError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("sample rate {0} Hz out of range (25..=1000)")]
    InvalidSampleRate(u32),
    #[error("duration must be positive")]
    EmptyDuration,
    #[error("reading out of range: bpm {bpm}, spo2 {spo2}%")]
    ReadingOutOfRange { bpm: u16, spo2: u8 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// One two-channel ADC sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpgSample {
    pub t_ms: u64,
    pub red: u16,
    pub ir: u16,
}

/// Generator knobs for one stretch of synthetic signal.
///
/// `ac_amplitude` is the peak-to-trough pulse height on the IR channel. The
/// red channel amplitude is derived from it so that
/// `(AC_red / DC_red) / (AC_ir / DC_ir) == spo2_ratio_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VitalsProfile {
    pub target_bpm: f64,
    pub spo2_ratio_r: f64,
    pub dc_red: f64,
    pub dc_ir: f64,
    pub ac_amplitude: f64,
    pub noise_amplitude: f64,
    pub contact: bool,
}

impl Default for VitalsProfile {
    fn default() -> Self {
        Self {
            target_bpm: 75.0,
            spo2_ratio_r: 0.52,
            dc_red: 26_000.0,
            dc_ir: 30_000.0,
            ac_amplitude: 1_200.0,
            noise_amplitude: 6.0,
            contact: true,
        }
    }
}

impl VitalsProfile {
    pub fn with_bpm(target_bpm: f64) -> Self {
        Self {
            target_bpm,
            ..Self::default()
        }
    }

    pub fn with_ratio(spo2_ratio_r: f64) -> Self {
        Self {
            spo2_ratio_r,
            ..Self::default()
        }
    }

    pub fn no_contact() -> Self {
        Self {
            contact: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), VitalsError> {
        let bad = |msg: String| Err(VitalsError::InvalidProfile(msg));
        if !(self.target_bpm.is_finite() && self.target_bpm > 0.0) {
            return bad(format!("target_bpm must be positive, got {}", self.target_bpm));
        }
        if !(self.spo2_ratio_r > 0.0 && self.spo2_ratio_r <= 3.4) {
            return bad(format!("spo2_ratio_r must be in (0, 3.4], got {}", self.spo2_ratio_r));
        }
        if !(self.ac_amplitude >= 0.0 && self.noise_amplitude >= 0.0) {
            return bad("amplitudes must be non-negative".into());
        }
        let swing = self.ac_amplitude + self.noise_amplitude;
        for (name, dc) in [("dc_red", self.dc_red), ("dc_ir", self.dc_ir)] {
            if !dc.is_finite() || dc - swing < 0.0 || dc + swing > f64::from(ADC_MAX) {
                return bad(format!("{name} {dc} with swing {swing} leaves the ADC range"));
            }
        }
        Ok(())
    }

    /// Peak-to-trough pulse height on the red channel.
    pub fn red_ac_amplitude(&self) -> f64 {
        self.spo2_ratio_r * self.ac_amplitude * self.dc_red / self.dc_ir
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Good,
    NoContact,
    Unstable,
}

/// A bpm / SpO2 estimate for one analysis window.
///
/// Values are only present for `Quality::Good`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VitalsReading {
    t_ms: u64,
    quality: Quality,
    bpm: Option<u16>,
    spo2_pct: Option<u8>,
}

impl VitalsReading {
    pub const BPM_RANGE: std::ops::RangeInclusive<u16> = 20..=250;
    pub const SPO2_RANGE: std::ops::RangeInclusive<u8> = 70..=100;

    pub fn good(t_ms: u64, bpm: u16, spo2_pct: u8) -> Result<Self, VitalsError> {
        if !Self::BPM_RANGE.contains(&bpm) || !Self::SPO2_RANGE.contains(&spo2_pct) {
            return Err(VitalsError::ReadingOutOfRange { bpm, spo2: spo2_pct });
        }
        Ok(Self {
            t_ms,
            quality: Quality::Good,
            bpm: Some(bpm),
            spo2_pct: Some(spo2_pct),
        })
    }

    pub fn no_contact(t_ms: u64) -> Self {
        Self {
            t_ms,
            quality: Quality::NoContact,
            bpm: None,
            spo2_pct: None,
        }
    }

    pub fn unstable(t_ms: u64) -> Self {
        Self {
            t_ms,
            quality: Quality::Unstable,
            bpm: None,
            spo2_pct: None,
        }
    }

    pub fn t_ms(&self) -> u64 {
        self.t_ms
    }

    pub fn quality(&self) -> Quality {
        self.quality
    }

    pub fn is_good(&self) -> bool {
        self.quality == Quality::Good
    }

    pub fn bpm(&self) -> Option<u16> {
        self.bpm
    }

    pub fn spo2_pct(&self) -> Option<u8> {
        self.spo2_pct
    }

    /// `(bpm, spo2)` for good readings.
    pub fn values(&self) -> Option<(u16, u8)> {
        self.bpm.zip(self.spo2_pct)
    }
}

/// Writes samples as `t_ms,red,ir` CSV with a header row.
pub fn write_samples_csv<W: io::Write>(out: W, samples: &[PpgSample]) -> Result<(), VitalsError> {
    let mut writer = csv::Writer::from_writer(out);
    for sample in samples {
        writer.serialize(sample)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: io::Read>(input: R) -> Result<Vec<PpgSample>, VitalsError> {
    let mut reader = csv::Reader::from_reader(input);
    let mut samples = Vec::new();
    for row in reader.deserialize() {
        samples.push(row?);
    }
    Ok(samples)
}
