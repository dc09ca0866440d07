//! Battery endurance and mobile-data accounting.
//!
//! All quantities are kept exact: charge in mA·ms, ratios as rationals.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio;

pub const DEFAULT_CAPACITY_MAH: u32 = 1800;
pub const DEFAULT_DRAW_MA: u32 = 200;
/// Cell voltage span; not modelled, carried for reports.
pub const VOLTAGE_RANGE_V: (f64, f64) = (3.7, 4.2);
/// Radio bytes per upload attempt: a 123 700 B hourly figure spread over 75
/// uploads, rounded.
pub const PER_UPLOAD_BYTES: u64 = 1649;

const MS_PER_HOUR: u64 = 3_600_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PowerError {
    #[error("current draw must be positive")]
    ZeroDraw,
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("projection window must be positive")]
    EmptyWindow,
}

/// `capacity / draw` hours.
pub fn endurance_hours(capacity_mah: u32, draw_ma: u32) -> Result<Ratio<u64>, PowerError> {
    if draw_ma == 0 {
        return Err(PowerError::ZeroDraw);
    }
    Ok(Ratio::new(u64::from(capacity_mah), u64::from(draw_ma)))
}

/// Emitted once, at the millisecond the charge runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryDepleted {
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryState {
    capacity_mah: u32,
    draw_ma: u32,
    consumed_ma_ms: u64,
    elapsed_ms: u64,
    depleted_at_ms: Option<u64>,
}

impl Default for BatteryState {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY_MAH, DEFAULT_DRAW_MA).expect("defaults are valid")
    }
}

impl BatteryState {
    pub fn new(capacity_mah: u32, draw_ma: u32) -> Result<Self, PowerError> {
        if draw_ma == 0 {
            return Err(PowerError::ZeroDraw);
        }
        if capacity_mah == 0 {
            return Err(PowerError::ZeroCapacity);
        }
        Ok(Self {
            capacity_mah,
            draw_ma,
            consumed_ma_ms: 0,
            elapsed_ms: 0,
            depleted_at_ms: None,
        })
    }

    pub fn capacity_mah(&self) -> u32 {
        self.capacity_mah
    }

    pub fn draw_ma(&self) -> u32 {
        self.draw_ma
    }

    fn capacity_ma_ms(&self) -> u64 {
        u64::from(self.capacity_mah) * MS_PER_HOUR
    }

    pub fn consumed_mah(&self) -> Ratio<u64> {
        Ratio::new(self.consumed_ma_ms, MS_PER_HOUR)
    }

    pub fn remaining_mah(&self) -> Ratio<u64> {
        Ratio::new(self.capacity_ma_ms() - self.consumed_ma_ms, MS_PER_HOUR)
    }

    pub fn is_depleted(&self) -> bool {
        self.depleted_at_ms.is_some()
    }

    pub fn depleted_at_ms(&self) -> Option<u64> {
        self.depleted_at_ms
    }

    /// Runs the load for `dt_ms`. Returns the depletion event on the call
    /// during which the charge reaches zero.
    pub fn drain(&mut self, dt_ms: u64) -> Option<BatteryDepleted> {
        if self.is_depleted() || dt_ms == 0 {
            return None;
        }
        let draw = u64::from(self.draw_ma);
        let left = self.capacity_ma_ms() - self.consumed_ma_ms;
        let wanted = draw.saturating_mul(dt_ms);
        if wanted < left {
            self.consumed_ma_ms += wanted;
            self.elapsed_ms += dt_ms;
            return None;
        }
        let at_ms = self.elapsed_ms + left.div_ceil(draw);
        self.consumed_ma_ms = self.capacity_ma_ms();
        self.elapsed_ms += dt_ms;
        self.depleted_at_ms = Some(at_ms);
        Some(BatteryDepleted { at_ms })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UploadOutcome {
    Delivered,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataEvent {
    pub t_ms: u64,
    pub bytes: u64,
    pub outcome: UploadOutcome,
}

/// Mobile data spent on uploads. Every attempt costs the same, delivered or
/// not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataLedger {
    per_upload_bytes: u64,
    bytes_sent: u64,
    events: Vec<DataEvent>,
}

impl Default for DataLedger {
    fn default() -> Self {
        Self::new(PER_UPLOAD_BYTES)
    }
}

impl DataLedger {
    pub fn new(per_upload_bytes: u64) -> Self {
        Self {
            per_upload_bytes,
            bytes_sent: 0,
            events: Vec::new(),
        }
    }

    pub fn record_upload(&mut self, t_ms: u64, outcome: UploadOutcome) {
        self.bytes_sent += self.per_upload_bytes;
        self.events.push(DataEvent {
            t_ms,
            bytes: self.per_upload_bytes,
            outcome,
        });
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn events(&self) -> &[DataEvent] {
        &self.events
    }

    pub fn attempts(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn delivered(&self) -> u64 {
        self.events
            .iter()
            .filter(|e| e.outcome == UploadOutcome::Delivered)
            .count() as u64
    }
}

/// Linear extrapolation of observed bytes, decimal units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub bytes: u64,
    pub window_ms: u64,
    pub kb_per_hour: Ratio<u64>,
    pub mb_per_day: Ratio<u64>,
}

impl Projection {
    pub fn new(bytes: u64, window_ms: u64) -> Result<Self, PowerError> {
        if window_ms == 0 {
            return Err(PowerError::EmptyWindow);
        }
        let kb_per_hour = Ratio::new(bytes * MS_PER_HOUR, window_ms * 1000);
        let mb_per_day = kb_per_hour * Ratio::new(24, 1000);
        Ok(Self {
            bytes,
            window_ms,
            kb_per_hour,
            mb_per_day,
        })
    }
}

pub fn projection_report(ledger: &DataLedger, window_ms: u64) -> Result<Projection, PowerError> {
    Projection::new(ledger.bytes_sent(), window_ms)
}

/// Flat summary written next to a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub endurance_hours: f64,
    pub kb_per_hour: f64,
    pub mb_per_day: f64,
    pub attempts: u64,
    pub delivered: u64,
    pub bytes_sent: u64,
    pub consumed_mah: f64,
    pub depleted_at_ms: Option<u64>,
}

impl PowerReport {
    pub fn new(battery: &BatteryState, ledger: &DataLedger, window_ms: u64) -> Result<Self, PowerError> {
        let endurance = endurance_hours(battery.capacity_mah(), battery.draw_ma())?;
        let projection = projection_report(ledger, window_ms)?;
        let f = |r: &Ratio<u64>| ratio::to_f64(r);
        Ok(Self {
            endurance_hours: f(&endurance),
            kb_per_hour: f(&projection.kb_per_hour),
            mb_per_day: f(&projection.mb_per_day),
            attempts: ledger.attempts(),
            delivered: ledger.delivered(),
            bytes_sent: ledger.bytes_sent(),
            consumed_mah: f(&battery.consumed_mah()),
            depleted_at_ms: battery.depleted_at_ms(),
        })
    }
}
