use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::device::DeviceConfig;
use crate::modem::{GnssTrack, NetworkParams};
use crate::power::{DEFAULT_CAPACITY_MAH, DEFAULT_DRAW_MA};
use crate::vitals::{VitalsProfile, DEFAULT_SAMPLE_HZ};

pub const DEFAULT_TICK_MS: u64 = 100;
pub const DEFAULT_GNSS_POLL_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start_ms: u64,
    #[serde(default)]
    pub profile: VitalsProfile,
}

/// An SMS sent to the device by a virtual phone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InboundSms {
    pub t_ms: u64,
    pub from: String,
    pub body: String,
    /// Defaults to the device's own number.
    #[serde(default)]
    pub to: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    pub capacity_mah: u32,
    pub draw_ma: u32,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_mah: DEFAULT_CAPACITY_MAH,
            draw_ma: DEFAULT_DRAW_MA,
        }
    }
}

/// One simulated run, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default = "default_sample_hz")]
    pub sample_hz: u32,
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    #[serde(default = "default_gnss_poll_ms")]
    pub gnss_poll_ms: u64,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub button_presses: Vec<u64>,
    #[serde(default)]
    pub inbound_sms: Vec<InboundSms>,
    #[serde(default)]
    pub gnss: GnssTrack,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub config: DeviceConfig,
    #[serde(default)]
    pub battery: BatteryParams,
}

fn default_sample_hz() -> u32 {
    DEFAULT_SAMPLE_HZ
}

fn default_tick_ms() -> u64 {
    DEFAULT_TICK_MS
}

fn default_gnss_poll_ms() -> u64 {
    DEFAULT_GNSS_POLL_MS
}

pub const BUNDLED: [(&str, &str); 5] = [
    ("nominal-hour", include_str!("../../scenarios/nominal-hour.toml")),
    ("brady-episode", include_str!("../../scenarios/brady-episode.toml")),
    ("tachy-episode", include_str!("../../scenarios/tachy-episode.toml")),
    ("config-session", include_str!("../../scenarios/config-session.toml")),
    ("lossy-network", include_str!("../../scenarios/lossy-network.toml")),
];

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let scenario: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn bundled(name: &str) -> Result<Self, HarnessError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| HarnessError::UnknownScenario(name.to_string()))?;
        Self::from_toml(text)
    }

    /// A bundled name or a path to a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self, HarnessError> {
        if BUNDLED.iter().any(|(n, _)| *n == name_or_path) {
            Self::bundled(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut problems = Vec::new();
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            problems.push(format!("name {:?} must be non-empty [A-Za-z0-9_-]", self.name));
        }
        if self.tick_ms == 0 {
            problems.push("tick_ms must be positive".into());
        } else if !self.duration_ms.is_multiple_of(self.tick_ms) {
            problems.push(format!(
                "duration_ms {} is not a multiple of tick_ms {}",
                self.duration_ms, self.tick_ms
            ));
        }
        if self.gnss_poll_ms == 0 {
            problems.push("gnss_poll_ms must be positive".into());
        }
        if !(25..=1000).contains(&self.sample_hz) {
            problems.push(format!("sample_hz {} outside 25..=1000", self.sample_hz));
        }
        match self.segments.first() {
            None => problems.push("at least one segment is required".into()),
            Some(first) if first.start_ms != 0 => problems.push("first segment must start at 0".into()),
            Some(_) => {}
        }
        for pair in self.segments.windows(2) {
            if pair[1].start_ms <= pair[0].start_ms {
                problems.push(format!(
                    "segment at {} ms does not follow {} ms",
                    pair[1].start_ms, pair[0].start_ms
                ));
            }
        }
        for seg in &self.segments {
            if seg.start_ms > 0 && seg.start_ms >= self.duration_ms {
                problems.push(format!("segment at {} ms starts at or after the end", seg.start_ms));
            }
            if let Err(e) = seg.profile.validate() {
                problems.push(format!("segment at {} ms: {e}", seg.start_ms));
            }
        }
        for &t in &self.button_presses {
            if t > self.duration_ms {
                problems.push(format!("button press at {t} ms is after the end"));
            }
        }
        for sms in &self.inbound_sms {
            if sms.t_ms > self.duration_ms {
                problems.push(format!("inbound sms at {} ms is after the end", sms.t_ms));
            }
            if sms.body.contains('\u{1a}') {
                problems.push(format!("inbound sms at {} ms contains a terminator byte", sms.t_ms));
            }
        }
        if let GnssTrack::Waypoints(points) = &self.gnss {
            if points.windows(2).any(|w| w[1].t_ms <= w[0].t_ms) {
                problems.push("gnss waypoints must have increasing times".into());
            }
        }
        if let Err(e) = self.network.validate() {
            problems.push(e);
        }
        if let Err(e) = self.config.validate() {
            problems.push(e.to_string());
        }
        if self.battery.capacity_mah == 0 || self.battery.draw_ma == 0 {
            problems.push("battery capacity and draw must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(problems))
        }
    }

    /// Directory name for this run's artifacts.
    pub fn run_dir_name(&self) -> String {
        format!("{}-seed{}", self.name, self.seed)
    }
}
