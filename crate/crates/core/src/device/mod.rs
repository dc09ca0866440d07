//! Device firmware: sensing cadence, display events, the SMS configuration
//! window, bpm classification with latched alerts, and the upload scheduler.
//!
//! [`Device::tick`] is the only mutator. It consumes whatever arrived since
//! the previous tick (sensor samples, button presses, inbound SMS, a GNSS
//! fix) and returns the effects the rest of the system must carry out.

mod alert;
mod config;
mod effects;

pub use alert::{build_alert_sms, classify_bpm, AlertEvent, AlertKind, BpmClass, BpmRange, GeoFix, SMS_MAX_CHARS};
pub use config::{
    handle_config_sms, is_api_key, is_e164, DeviceConfig, ACK_BAD_COMMAND, ACK_DUPLICATE, ACK_LIST_FULL,
    ACK_UNKNOWN_CONTACT, ACK_WINDOW_CLOSED, MAX_CONTACTS,
};
pub use effects::{build_update_request, Effect, EffectRecord, UpdateRequest, UPDATE_PATH};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modem::SmsMessage;
use crate::vitals::{assess_window, DetectionParams, PpgSample, VitalsReading, MIN_BPM_WINDOW_MS};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid device config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Monitoring,
    Configuring { entered_at_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlertLatch {
    Armed,
    Latched(AlertKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub mode: Mode,
    pub last_upload_ms: u64,
    pub last_reading: Option<VitalsReading>,
    pub alert_latch: AlertLatch,
    pub last_fix: Option<GeoFix>,
}

impl Default for DeviceState {
    fn default() -> Self {
        Self {
            mode: Mode::Monitoring,
            last_upload_ms: 0,
            last_reading: None,
            alert_latch: AlertLatch::Armed,
            last_fix: None,
        }
    }
}

/// Everything that reached the firmware since the previous tick.
#[derive(Debug, Clone, Default)]
pub struct TickInputs {
    pub samples: Vec<PpgSample>,
    pub button_presses: u32,
    pub inbound_sms: Vec<SmsMessage>,
    pub fix: Option<GeoFix>,
}

/// Sensing cadence knobs that are not user-configurable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingParams {
    pub analysis_window_ms: u64,
    pub reading_interval_ms: u64,
    pub detection: DetectionParams,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            analysis_window_ms: 10_000,
            reading_interval_ms: 1_000,
            detection: DetectionParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Device {
    config: DeviceConfig,
    state: DeviceState,
    sensing: SensingParams,
    buffer: VecDeque<PpgSample>,
    last_tick_ms: Option<u64>,
    last_assessed_ms: Option<u64>,
}

impl Device {
    pub fn new(config: DeviceConfig) -> Result<Self, DeviceError> {
        Self::with_sensing(config, SensingParams::default())
    }

    pub fn with_sensing(config: DeviceConfig, sensing: SensingParams) -> Result<Self, DeviceError> {
        config.validate()?;
        Ok(Self {
            config,
            state: DeviceState::default(),
            sensing,
            buffer: VecDeque::new(),
            last_tick_ms: None,
            last_assessed_ms: None,
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn tick(&mut self, now_ms: u64, inputs: TickInputs) -> Vec<Effect> {
        if let Some(prev) = self.last_tick_ms {
            if now_ms < prev {
                return vec![Effect::Diagnostic {
                    t_ms: now_ms,
                    message: format!("tick at {now_ms} ms precedes previous tick at {prev} ms"),
                }];
            }
        }
        self.last_tick_ms = Some(now_ms);
        let mut effects = Vec::new();

        if let Mode::Configuring { entered_at_ms } = self.state.mode {
            if now_ms - entered_at_ms > self.config.config_window_ms() {
                self.state.mode = Mode::Monitoring;
                effects.push(Effect::Display {
                    t_ms: now_ms,
                    text: "MONITORING".into(),
                });
            }
        }

        for _ in 0..inputs.button_presses {
            self.state.mode = Mode::Configuring { entered_at_ms: now_ms };
            effects.push(Effect::Display {
                t_ms: now_ms,
                text: format!("{} CONFIG {}s", self.vitals_line(), self.config.config_window_s),
            });
        }

        for msg in &inputs.inbound_sms {
            self.on_sms(now_ms, msg, &mut effects);
        }

        if let Some(fix) = inputs.fix {
            self.state.last_fix = Some(fix);
        }

        self.ingest(inputs.samples);
        if let Some(reading) = self.assess(now_ms) {
            effects.extend(self.apply_reading(now_ms, reading));
        }

        let due = now_ms.saturating_sub(self.state.last_upload_ms) >= self.config.upload_interval_ms();
        if due {
            let request = self
                .state
                .last_reading
                .and_then(|r| build_update_request(&r, &self.config.api_key));
            if let Some(request) = request {
                self.state.last_upload_ms = now_ms;
                effects.push(Effect::HttpUpdate { t_ms: now_ms, request });
            }
        }
        effects
    }

    /// Records a reading and runs the alert policy on it. A latched alert
    /// stays silent until a normal reading re-arms it.
    pub fn apply_reading(&mut self, now_ms: u64, reading: VitalsReading) -> Vec<Effect> {
        self.state.last_reading = Some(reading);
        let Some((bpm, spo2_pct)) = reading.values() else {
            return Vec::new();
        };
        let Some(kind) = classify_bpm(bpm, self.config.nominal_bpm).alert_kind() else {
            self.state.alert_latch = AlertLatch::Armed;
            return Vec::new();
        };
        if self.state.alert_latch == AlertLatch::Latched(kind) {
            return Vec::new();
        }
        self.state.alert_latch = AlertLatch::Latched(kind);

        let fix = self.state.last_fix.unwrap_or_else(|| GeoFix::invalid(now_ms));
        let body = build_alert_sms(&reading, &fix, kind).expect("reading has values");
        let mut effects = vec![Effect::AlertRaised(AlertEvent {
            t_ms: now_ms,
            kind,
            bpm,
            spo2_pct,
            fix,
            url: fix.maps_url(),
        })];
        effects.extend(self.config.contacts.iter().map(|to| Effect::SendSms {
            t_ms: now_ms,
            to: to.clone(),
            body: body.clone(),
        }));
        effects
    }

    fn on_sms(&mut self, now_ms: u64, msg: &SmsMessage, effects: &mut Vec<Effect>) {
        let ack = if matches!(self.state.mode, Mode::Configuring { .. }) {
            let (next, ack) = handle_config_sms(msg, &self.state, now_ms, &self.config);
            if next != self.config {
                self.config = next;
                effects.push(Effect::ConfigChanged {
                    t_ms: now_ms,
                    summary: ack.clone(),
                });
            }
            ack
        } else {
            effects.push(Effect::Diagnostic {
                t_ms: now_ms,
                message: format!("sms from {} outside configuration mode", msg.from),
            });
            ACK_WINDOW_CLOSED.to_string()
        };
        effects.push(Effect::SendSms {
            t_ms: now_ms,
            to: msg.from.clone(),
            body: ack,
        });
    }

    fn ingest(&mut self, samples: Vec<PpgSample>) {
        self.buffer.extend(samples);
        if let Some(last) = self.buffer.back().map(|s| s.t_ms) {
            let keep_from = last.saturating_sub(self.sensing.analysis_window_ms);
            while self.buffer.front().is_some_and(|s| s.t_ms < keep_from) {
                self.buffer.pop_front();
            }
        }
    }

    fn assess(&mut self, now_ms: u64) -> Option<VitalsReading> {
        if self
            .last_assessed_ms
            .is_some_and(|t| now_ms - t < self.sensing.reading_interval_ms)
        {
            return None;
        }
        let first = self.buffer.front()?.t_ms;
        let last = self.buffer.back()?.t_ms;
        if last - first < MIN_BPM_WINDOW_MS {
            return None;
        }
        self.last_assessed_ms = Some(now_ms);
        let window = self.buffer.make_contiguous();
        Some(assess_window(
            window,
            self.sensing.analysis_window_ms,
            &self.sensing.detection,
        ))
    }

    fn vitals_line(&self) -> String {
        match self.state.last_reading.and_then(|r| r.values()) {
            Some((bpm, spo2)) => format!("BPM={bpm} SpO2={spo2}%"),
            None => "BPM=-- SpO2=--%".to_string(),
        }
    }
}
