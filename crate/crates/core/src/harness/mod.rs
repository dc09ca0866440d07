//! Scenario runner: one simulated clock driving sensor, firmware, modem,
//! network, telemetry and power accounting, plus the reports built on top.

mod compare;
mod scenario;

pub use compare::{compare_to_reference, export_series, ComparisonRow, Tolerance};
pub use scenario::{BatteryParams, InboundSms, Scenario, Segment, BUNDLED, DEFAULT_GNSS_POLL_MS, DEFAULT_TICK_MS};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{AlertEvent, Device, Effect, EffectRecord, GeoFix, TickInputs};
use crate::modem::{Delivery, MessageClass, Modem, ModemSession, SmsMessage, VirtualNetwork};
use crate::power::{BatteryState, DataLedger, PowerReport, Projection, UploadOutcome};
use crate::ratio;
use crate::telemetry::{ChannelId, FeedQuery, TelemetryError, TelemetryService};
use crate::vitals::{PpgSynth, Quality, SampleFifo, VitalsReading, DEFAULT_FIFO_CAPACITY};

/// Host the device's uploads are addressed to.
pub const TELEMETRY_HOST: &str = "api.thingspeak.com";
const APN: &str = "internet";

pub const EFFECTS_FILE: &str = "effects.jsonl";
pub const SERIAL_FILE: &str = "serial.log";
pub const TELEMETRY_FILE: &str = "telemetry.jsonl";
pub const NETWORK_FILE: &str = "network.jsonl";
pub const VITALS_FILE: &str = "vitals.csv";
pub const REPORT_FILE: &str = "report.json";
pub const POWER_FILE: &str = "power.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("no bundled scenario named {0:?}")]
    UnknownScenario(String),
    #[error("run setup failed: {0}")]
    Setup(String),
    #[error("corrupt run directory: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingCounts {
    pub good: u64,
    pub unstable: u64,
    pub no_contact: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub band_mhz: u16,
    pub uploads_attempted: u64,
    pub uploads_received: u64,
    pub success_ratio: Option<Ratio<u64>>,
    pub success_decimal: Option<String>,
    pub alerts: Vec<AlertEvent>,
    pub sms_sent: u64,
    pub sms_delivered: u64,
    pub endurance_hours: f64,
    pub kb_per_hour: Option<f64>,
    pub mb_per_day: Option<f64>,
    pub battery_depleted_at_ms: Option<u64>,
    pub readings: ReadingCounts,
    /// Mean |reported - generated| bpm over readings whose analysis window
    /// lies inside one segment.
    pub bpm_abs_error: Option<f64>,
    pub comparison: Vec<ComparisonRow>,
}

impl RunReport {
    pub fn flagged(&self) -> bool {
        self.comparison.iter().any(|row| row.flagged)
    }
}

/// Everything a run writes, held in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub effects: String,
    pub serial: String,
    pub telemetry: String,
    pub network: String,
    pub vitals: String,
    pub report: String,
    pub power: String,
}

impl Artifacts {
    pub fn files(&self) -> [(&'static str, &str); 7] {
        [
            (EFFECTS_FILE, &self.effects),
            (SERIAL_FILE, &self.serial),
            (TELEMETRY_FILE, &self.telemetry),
            (NETWORK_FILE, &self.network),
            (VITALS_FILE, &self.vitals),
            (REPORT_FILE, &self.report),
            (POWER_FILE, &self.power),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        for (name, content) in self.files() {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

/// A finished run with the live component states kept for inspection.
#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub artifacts: Artifacts,
    pub effects: Vec<Effect>,
    pub readings: Vec<VitalsReading>,
    pub network: VirtualNetwork,
    pub telemetry: Arc<TelemetryService>,
    pub channel: ChannelId,
    pub battery: BatteryState,
    pub data: DataLedger,
    pub projection: Option<Projection>,
    pub device: Device,
}

/// Runs a scenario and writes its artifacts to `out_root/<name>-seed<seed>`.
pub fn run_to_dir(scenario: &Scenario, out_root: &Path) -> Result<(RunOutput, PathBuf), HarnessError> {
    let output = run(scenario)?;
    let dir = out_root.join(scenario.run_dir_name());
    output.artifacts.write_to(&dir)?;
    Ok((output, dir))
}

pub fn load_report(run_dir: &Path) -> Result<RunReport, HarnessError> {
    let text = std::fs::read_to_string(run_dir.join(REPORT_FILE))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Corrupt(format!("{REPORT_FILE}: {e}")))
}

struct Sim {
    device: Device,
    modem: Modem,
    network: VirtualNetwork,
    data: DataLedger,
    effects: Vec<Effect>,
    log: String,
}

impl Sim {
    fn at(&mut self, line: &str, now_ms: u64) -> Vec<String> {
        let mut bytes = line.as_bytes().to_vec();
        bytes.push(b'\r');
        self.modem.feed(&bytes, &mut self.network, now_ms)
    }

    fn log_record(&mut self, record: &EffectRecord) {
        self.log.push_str(&record.to_json_line());
        self.log.push('\n');
    }

    fn bring_up_modem(&mut self) {
        for cmd in [
            "AT".to_string(),
            "AT+CMGF=1".into(),
            "AT+CGNSPWR=1".into(),
            "AT+SAPBR=3,1,\"Contype\",\"GPRS\"".into(),
            format!("AT+SAPBR=3,1,\"APN\",\"{APN}\""),
            "AT+SAPBR=1,1".into(),
        ] {
            self.at(&cmd, 0);
        }
    }

    fn poll_gnss(&mut self, now_ms: u64) -> Option<GeoFix> {
        let lines = self.at("AT+CGNSINF", now_ms);
        lines.iter().find_map(|l| parse_cgnsinf(l, now_ms))
    }

    fn send_sms(&mut self, now_ms: u64, to: &str, body: &str) {
        self.at(&format!("AT+CMGS=\"{to}\""), now_ms);
        let mut bytes = body.as_bytes().to_vec();
        bytes.push(0x1A);
        self.modem.feed(&bytes, &mut self.network, now_ms);
    }

    fn upload(&mut self, now_ms: u64, path_and_query: &str) {
        self.at("AT+HTTPINIT", now_ms);
        self.at("AT+HTTPPARA=\"CID\",1", now_ms);
        self.at(
            &format!("AT+HTTPPARA=\"URL\",\"{TELEMETRY_HOST}{path_and_query}\""),
            now_ms,
        );
        let lines = self.at("AT+HTTPACTION=0", now_ms);
        let status = lines.iter().find_map(|l| parse_httpaction(l));
        match status {
            Some(0) => self.data.record_upload(now_ms, UploadOutcome::Lost),
            Some(_) => {
                self.data.record_upload(now_ms, UploadOutcome::Delivered);
                self.at("AT+HTTPREAD", now_ms);
            }
            None => {}
        }
        self.at("AT+HTTPTERM", now_ms);
    }

    fn act(&mut self, effect: &Effect) {
        match effect {
            Effect::SendSms { t_ms, to, body } => self.send_sms(*t_ms, to, body),
            Effect::HttpUpdate { t_ms, request } => self.upload(*t_ms, &request.url()),
            Effect::Display { .. }
            | Effect::ConfigChanged { .. }
            | Effect::AlertRaised(_)
            | Effect::Diagnostic { .. } => {}
        }
    }
}

/// `+CGNSINF: 1,1,<utc>,<lat>,<lon>` to a fix; anything else is no fix.
fn parse_cgnsinf(line: &str, now_ms: u64) -> Option<GeoFix> {
    let rest = line.strip_prefix("+CGNSINF: ")?;
    let fields: Vec<&str> = rest.split(',').collect();
    match fields.as_slice() {
        ["1", "1", _, lat, lon] => match (lat.parse(), lon.parse()) {
            (Ok(lat), Ok(lon)) => Some(GeoFix::new(lat, lon, now_ms)),
            _ => Some(GeoFix::invalid(now_ms)),
        },
        _ => Some(GeoFix::invalid(now_ms)),
    }
}

fn parse_httpaction(line: &str) -> Option<u16> {
    let rest = line.strip_prefix("+HTTPACTION: ")?;
    rest.split(',').nth(1)?.parse().ok()
}

/// Runs a scenario to completion. Ticks fall on `0, tick, 2*tick, ..,
/// duration`; the run stops early if the battery runs out.
pub fn run(scenario: &Scenario) -> Result<RunOutput, HarnessError> {
    scenario.validate()?;
    let setup = |e: &dyn std::fmt::Display| HarnessError::Setup(e.to_string());

    let telemetry = Arc::new(TelemetryService::new());
    let channel = telemetry
        .create_channel(&scenario.config.api_key)
        .map_err(|e| setup(&e))?;
    let network = VirtualNetwork::new(scenario.network, scenario.seed)
        .with_gnss(scenario.gnss.clone())
        .with_endpoint(telemetry.clone());
    let device = Device::new(scenario.config.clone()).map_err(|e| setup(&e))?;
    let mut battery =
        BatteryState::new(scenario.battery.capacity_mah, scenario.battery.draw_ma).map_err(|e| setup(&e))?;
    let mut synth =
        PpgSynth::new(scenario.segments[0].profile, scenario.sample_hz, scenario.seed).map_err(|e| setup(&e))?;
    let mut fifo = SampleFifo::new(DEFAULT_FIFO_CAPACITY);

    let mut sim = Sim {
        modem: Modem::new(ModemSession::new(scenario.config.own_number.clone())),
        device,
        network,
        data: DataLedger::default(),
        effects: Vec::new(),
        log: String::new(),
    };
    sim.bring_up_modem();

    let mut readings: Vec<VitalsReading> = Vec::new();
    let mut next_segment = 1;
    let mut next_gnss_ms = 0;
    let mut last_t: Option<u64> = None;
    let mut t = 0;
    while t <= scenario.duration_ms {
        if let Some(prev) = last_t {
            if let Some(event) = battery.drain(t - prev) {
                let record = EffectRecord::new(event.at_ms, "battery_depleted");
                sim.log_record(&record);
                break;
            }
        }
        let in_window = |x: u64| last_t.map_or(x == 0, |prev| x > prev && x <= t);

        // sensor: profile switches land on their exact sample boundary
        let mut samples = Vec::new();
        while let Some(seg) = scenario.segments.get(next_segment).filter(|s| s.start_ms <= t) {
            samples.extend(synth.samples_until(seg.start_ms));
            synth.set_profile(seg.profile).map_err(|e| setup(&e))?;
            next_segment += 1;
        }
        samples.extend(synth.samples_until(t + 1));
        let mut polled = Vec::new();
        for s in samples {
            if fifo.len() == fifo.capacity() {
                polled.extend(fifo.drain());
            }
            fifo.push(s);
        }
        polled.extend(fifo.drain());

        let fix = (t >= next_gnss_ms).then(|| {
            next_gnss_ms = t + scenario.gnss_poll_ms;
            sim.poll_gnss(t)
        });

        let mut inbound = Vec::new();
        for sms in scenario.inbound_sms.iter().filter(|m| in_window(m.t_ms)) {
            let msg = SmsMessage {
                from: sms.from.clone(),
                to: sms.to.clone().unwrap_or_else(|| sim.device.config().own_number.clone()),
                body: sms.body.clone(),
                t_ms: t,
            };
            for urc in sim.modem.receive_sms(&mut sim.network, msg) {
                let index = urc.rsplit(',').next().and_then(|i| i.parse().ok());
                if let Some((stored, _)) = index.and_then(|i| sim.modem.read_stored(i)) {
                    inbound.push(stored);
                }
            }
        }

        let inputs = TickInputs {
            samples: polled,
            button_presses: scenario.button_presses.iter().filter(|&&b| in_window(b)).count() as u32,
            inbound_sms: inbound,
            fix: fix.flatten(),
        };
        let before = sim.device.state().last_reading;
        let effects = sim.device.tick(t, inputs);
        let after = sim.device.state().last_reading;
        if after != before {
            readings.extend(after);
        }
        for effect in effects {
            sim.log_record(&effect.record());
            sim.act(&effect);
            sim.effects.push(effect);
        }
        last_t = Some(t);
        t += scenario.tick_ms;
    }
    let overflows = fifo.overflows();
    debug_assert_eq!(overflows, 0);

    let Sim {
        device,
        modem,
        network,
        data,
        effects,
        log,
        ..
    } = sim;

    let elapsed_ms = last_t.unwrap_or(0);
    let received = telemetry.get_feed(channel, FeedQuery::All)?.len() as u64;
    let attempted = data.attempts();
    let success_ratio = (attempted > 0).then(|| Ratio::new(received, attempted));
    let projection = Projection::new(data.bytes_sent(), elapsed_ms).ok();
    let power = PowerReport::new(&battery, &data, elapsed_ms.max(1)).map_err(|e| setup(&e))?;
    let sms_sent = effects.iter().filter(|e| matches!(e, Effect::SendSms { .. })).count() as u64;
    let own = device.config().own_number.clone();
    let sms_delivered = network
        .ledger()
        .iter()
        .filter(|e| e.class == MessageClass::Sms && e.from == own && e.outcome == Delivery::Delivered)
        .count() as u64;

    let mut counts = ReadingCounts::default();
    for r in &readings {
        match r.quality() {
            Quality::Good => counts.good += 1,
            Quality::Unstable => counts.unstable += 1,
            Quality::NoContact => counts.no_contact += 1,
        }
    }

    let mut report = RunReport {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        duration_ms: elapsed_ms,
        band_mhz: u16::from(network.band()),
        uploads_attempted: attempted,
        uploads_received: received,
        success_decimal: success_ratio.as_ref().map(|r| ratio::decimal(r, 4)),
        success_ratio,
        alerts: effects
            .iter()
            .filter_map(|e| match e {
                Effect::AlertRaised(a) => Some(a.clone()),
                _ => None,
            })
            .collect(),
        sms_sent,
        sms_delivered,
        endurance_hours: power.endurance_hours,
        kb_per_hour: projection.as_ref().map(|p| ratio::to_f64(&p.kb_per_hour)),
        mb_per_day: projection.as_ref().map(|p| ratio::to_f64(&p.mb_per_day)),
        battery_depleted_at_ms: battery.depleted_at_ms(),
        readings: counts,
        bpm_abs_error: bpm_abs_error(scenario, &readings),
        comparison: Vec::new(),
    };
    report.comparison = compare_to_reference(&report);

    let mut telemetry_snapshot = Vec::new();
    telemetry.save_snapshot(channel, &mut telemetry_snapshot)?;
    let artifacts = Artifacts {
        effects: log,
        serial: modem.transcript().to_string(),
        telemetry: String::from_utf8(telemetry_snapshot).expect("json is utf-8"),
        network: network.ledger_jsonl(),
        vitals: readings_csv(&readings),
        report: serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        power: serde_json::to_string_pretty(&power).expect("power report serializes") + "\n",
    };

    Ok(RunOutput {
        report,
        artifacts,
        effects,
        readings,
        network,
        telemetry,
        channel,
        battery,
        data,
        projection,
        device,
    })
}

fn readings_csv(readings: &[VitalsReading]) -> String {
    let mut out = String::from("t_ms,bpm,spo2\n");
    for r in readings {
        let (bpm, spo2) = r
            .values()
            .map_or((String::new(), String::new()), |(b, s)| (b.to_string(), s.to_string()));
        let _ = writeln!(out, "{},{bpm},{spo2}", r.t_ms());
    }
    out
}

/// The generator's own target stands in for a reference instrument.
fn bpm_abs_error(scenario: &Scenario, readings: &[VitalsReading]) -> Option<f64> {
    const WINDOW_MS: u64 = 10_000;
    let mut errors = Vec::new();
    for r in readings {
        let Some(bpm) = r.bpm() else { continue };
        let t = r.t_ms();
        let seg = scenario.segments.iter().rev().find(|s| s.start_ms <= t)?;
        if t.saturating_sub(WINDOW_MS) < seg.start_ms {
            continue;
        }
        errors.push((f64::from(bpm) - seg.profile.target_bpm).abs());
    }
    (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64)
}
