use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SmsMessage;
use crate::device::GeoFix;

/// Default per-attempt HTTP loss, 2 of 75.
pub const DEFAULT_HTTP_LOSS_PROB: f64 = 2.0 / 75.0;

const SMS_STREAM: u64 = 1;
const HTTP_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Band {
    Gsm850,
    #[default]
    Gsm900,
    Dcs1800,
    Pcs1900,
}

impl TryFrom<u16> for Band {
    type Error = String;

    fn try_from(mhz: u16) -> Result<Self, Self::Error> {
        match mhz {
            850 => Ok(Self::Gsm850),
            900 => Ok(Self::Gsm900),
            1800 => Ok(Self::Dcs1800),
            1900 => Ok(Self::Pcs1900),
            other => Err(format!("unsupported band {other} MHz")),
        }
    }
}

impl From<Band> for u16 {
    fn from(band: Band) -> u16 {
        match band {
            Band::Gsm850 => 850,
            Band::Gsm900 => 900,
            Band::Dcs1800 => 1800,
            Band::Pcs1900 => 1900,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_ms: u64,
    pub lat: f64,
    pub lon: f64,
}

/// Where the wearer is over time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnssTrack {
    /// No satellite fix ever.
    #[default]
    NoFix,
    Static {
        lat: f64,
        lon: f64,
    },
    /// Linear interpolation between waypoints, clamped at both ends.
    Waypoints(Vec<Waypoint>),
}

impl GnssTrack {
    pub fn fix_at(&self, t_ms: u64) -> GeoFix {
        match self {
            GnssTrack::NoFix => GeoFix::invalid(t_ms),
            GnssTrack::Static { lat, lon } => GeoFix::new(*lat, *lon, t_ms),
            GnssTrack::Waypoints(points) => {
                let Some(first) = points.first() else {
                    return GeoFix::invalid(t_ms);
                };
                let next = points.partition_point(|p| p.t_ms <= t_ms);
                if next == 0 {
                    return GeoFix::new(first.lat, first.lon, t_ms);
                }
                let a = points[next - 1];
                let Some(b) = points.get(next) else {
                    return GeoFix::new(a.lat, a.lon, t_ms);
                };
                let f = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
                GeoFix::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon), t_ms)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    Sms,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delivery {
    Delivered,
    Dropped,
}

/// One submission to the network and what became of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t_ms: u64,
    pub class: MessageClass,
    pub outcome: Delivery,
    pub from: String,
    pub to: String,
    /// SMS body or request URL.
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HttpMethod {
    Get,
    Post,
    Head,
}

impl HttpMethod {
    pub fn from_action(code: i64) -> Option<Self> {
        match code {
            0 => Some(Self::Get),
            1 => Some(Self::Post),
            2 => Some(Self::Head),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

impl HttpReply {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        Self {
            status,
            body: body.into(),
        }
    }
}

/// Server side of the GPRS bridge.
pub trait HttpEndpoint: Send + Sync {
    /// `target` is path plus query, e.g. `/update?api_key=K&field1=72`.
    fn handle(&self, method: HttpMethod, target: &str, now_ms: u64) -> HttpReply;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkParams {
    pub sms_loss_prob: f64,
    pub http_loss_prob: f64,
    pub band: Band,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            sms_loss_prob: 0.0,
            http_loss_prob: DEFAULT_HTTP_LOSS_PROB,
            band: Band::default(),
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("sms_loss_prob", self.sms_loss_prob),
            ("http_loss_prob", self.http_loss_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// The cellular side: SMS routing between numbers, the GPRS path to an
/// HTTP endpoint, and the GNSS sky. Loss is an independent Bernoulli roll
/// per attempt, drawn from per-class streams of one seeded generator so the
/// SMS traffic never perturbs HTTP outcomes.
pub struct VirtualNetwork {
    params: NetworkParams,
    seed: u64,
    sms_rng: ChaCha8Rng,
    http_rng: ChaCha8Rng,
    inboxes: BTreeMap<String, Vec<SmsMessage>>,
    ledger: Vec<LedgerEntry>,
    gnss: GnssTrack,
    endpoint: Option<Arc<dyn HttpEndpoint>>,
    diagnostics: Vec<String>,
}

impl fmt::Debug for VirtualNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VirtualNetwork")
            .field("params", &self.params)
            .field("seed", &self.seed)
            .field("ledger_len", &self.ledger.len())
            .field("gnss", &self.gnss)
            .finish_non_exhaustive()
    }
}

impl VirtualNetwork {
    pub fn new(params: NetworkParams, seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            params,
            seed,
            sms_rng: stream(SMS_STREAM),
            http_rng: stream(HTTP_STREAM),
            inboxes: BTreeMap::new(),
            ledger: Vec::new(),
            gnss: GnssTrack::NoFix,
            endpoint: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn with_gnss(mut self, track: GnssTrack) -> Self {
        self.gnss = track;
        self
    }

    pub fn with_endpoint(mut self, endpoint: Arc<dyn HttpEndpoint>) -> Self {
        self.endpoint = Some(endpoint);
        self
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn band(&self) -> Band {
        self.params.band
    }

    pub fn fix_at(&self, t_ms: u64) -> GeoFix {
        self.gnss.fix_at(t_ms)
    }

    fn roll_lost(&mut self, class: MessageClass) -> bool {
        let (rng, p) = match class {
            MessageClass::Sms => (&mut self.sms_rng, self.params.sms_loss_prob),
            MessageClass::Http => (&mut self.http_rng, self.params.http_loss_prob),
        };
        let u: f64 = rng.random();
        u < p
    }

    fn record(&mut self, t_ms: u64, class: MessageClass, outcome: Delivery, from: &str, to: &str, detail: &str) {
        self.ledger.push(LedgerEntry {
            t_ms,
            class,
            outcome,
            from: from.to_string(),
            to: to.to_string(),
            detail: detail.to_string(),
        });
    }

    /// Routes one SMS. Delivered messages land in the recipient inbox, lost
    /// ones only in the ledger.
    pub fn send_sms(&mut self, msg: SmsMessage) -> Delivery {
        let outcome = if self.roll_lost(MessageClass::Sms) {
            Delivery::Dropped
        } else {
            Delivery::Delivered
        };
        self.record(msg.t_ms, MessageClass::Sms, outcome, &msg.from, &msg.to, &msg.body);
        if outcome == Delivery::Delivered {
            self.inboxes.entry(msg.to.clone()).or_default().push(msg);
        }
        outcome
    }

    /// Carries a request over GPRS. A lost request returns status 0 and
    /// never reaches the endpoint.
    pub fn http_bridge(&mut self, from: &str, method: HttpMethod, url: &str, now_ms: u64) -> HttpReply {
        let target = request_target(url);
        if self.roll_lost(MessageClass::Http) {
            self.record(now_ms, MessageClass::Http, Delivery::Dropped, from, url, &target);
            return HttpReply::new(0, "");
        }
        self.record(now_ms, MessageClass::Http, Delivery::Delivered, from, url, &target);
        match &self.endpoint {
            Some(endpoint) => endpoint.handle(method, &target, now_ms),
            None => HttpReply::new(404, ""),
        }
    }

    pub fn inbox(&self, number: &str) -> &[SmsMessage] {
        self.inboxes.get(number).map_or(&[], Vec::as_slice)
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn dropped(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.ledger.iter().filter(|e| e.outcome == Delivery::Dropped)
    }

    pub fn count(&self, class: MessageClass, outcome: Option<Delivery>) -> usize {
        self.ledger
            .iter()
            .filter(|e| e.class == class && outcome.is_none_or(|o| e.outcome == o))
            .count()
    }

    pub fn note(&mut self, diagnostic: String) {
        self.diagnostics.push(diagnostic);
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    /// Ledger as JSON lines, one entry per line.
    pub fn ledger_jsonl(&self) -> String {
        self.ledger
            .iter()
            .map(|e| serde_json::to_string(e).expect("ledger entry serializes") + "\n")
            .collect()
    }
}

/// Path and query of a URL, with scheme and host removed.
pub fn request_target(url: &str) -> String {
    let without_scheme = url.split_once("://").map_or(url, |(_, rest)| rest);
    if without_scheme.starts_with('/') {
        return without_scheme.to_string();
    }
    match without_scheme.find(['/', '?']) {
        Some(i) if without_scheme.as_bytes()[i] == b'/' => without_scheme[i..].to_string(),
        Some(i) => format!("/{}", &without_scheme[i..]),
        None => "/".to_string(),
    }
}
