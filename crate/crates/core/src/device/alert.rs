use serde::{Deserialize, Serialize};

use crate::vitals::VitalsReading;

/// Inclusive nominal heart-rate band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u16; 2]", into = "[u16; 2]")]
pub struct BpmRange {
    pub low: u16,
    pub high: u16,
}

impl BpmRange {
    pub const fn new(low: u16, high: u16) -> Self {
        Self { low, high }
    }
}

impl Default for BpmRange {
    fn default() -> Self {
        Self::new(60, 100)
    }
}

impl From<[u16; 2]> for BpmRange {
    fn from([low, high]: [u16; 2]) -> Self {
        Self { low, high }
    }
}

impl From<BpmRange> for [u16; 2] {
    fn from(r: BpmRange) -> Self {
        [r.low, r.high]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BpmClass {
    Normal,
    Bradycardia,
    Tachycardia,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlertKind {
    Bradycardia,
    Tachycardia,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bradycardia => "Bradycardia",
            Self::Tachycardia => "Tachycardia",
        }
    }
}

impl BpmClass {
    pub fn alert_kind(self) -> Option<AlertKind> {
        match self {
            Self::Normal => None,
            Self::Bradycardia => Some(AlertKind::Bradycardia),
            Self::Tachycardia => Some(AlertKind::Tachycardia),
        }
    }
}

pub fn classify_bpm(bpm: u16, range: BpmRange) -> BpmClass {
    if bpm < range.low {
        BpmClass::Bradycardia
    } else if bpm > range.high {
        BpmClass::Tachycardia
    } else {
        BpmClass::Normal
    }
}

/// A GNSS position. Coordinates of an invalid fix are never rendered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub lat: f64,
    pub lon: f64,
    pub valid: bool,
    pub t_ms: u64,
}

impl GeoFix {
    pub fn new(lat: f64, lon: f64, t_ms: u64) -> Self {
        let valid = (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon);
        Self { lat, lon, valid, t_ms }
    }

    pub fn invalid(t_ms: u64) -> Self {
        Self {
            lat: 0.0,
            lon: 0.0,
            valid: false,
            t_ms,
        }
    }

    pub fn maps_url(&self) -> Option<String> {
        self.valid
            .then(|| format!("https://maps.google.com/?q={:.6},{:.6}", self.lat, self.lon))
    }
}

/// An out-of-range reading that was reported to the contacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub t_ms: u64,
    pub kind: AlertKind,
    pub bpm: u16,
    pub spo2_pct: u8,
    pub fix: GeoFix,
    pub url: Option<String>,
}

/// Longest body that fits one SMS.
pub const SMS_MAX_CHARS: usize = 160;

/// Alert text for a good reading; `None` when the reading carries no values.
pub fn build_alert_sms(reading: &VitalsReading, fix: &GeoFix, kind: AlertKind) -> Option<String> {
    let (bpm, spo2) = reading.values()?;
    let location = fix.maps_url().unwrap_or_else(|| "unavailable".to_string());
    Some(format!(
        "ALERT {}: BPM={bpm} SpO2={spo2}% Location: {location}",
        kind.as_str()
    ))
}
