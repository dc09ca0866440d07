//! ThingSpeak-style channel store: keyed updates, feed queries, bucketed
//! aggregation and delivery accounting.

mod aggregate;
mod http;

pub use aggregate::{aggregate_entries, AggregateQuery, BucketUnit, Statistic};
pub use http::{parse_query, route};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{is_api_key, UPDATE_PATH};
use crate::modem::{HttpEndpoint, HttpMethod, HttpReply, LedgerEntry, MessageClass};
use crate::ratio;

/// Minimum spacing between stored updates on one channel.
pub const RATE_LIMIT_MS: u64 = 15_000;
pub const FIELD_COUNT: usize = 8;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("channel {0} not found")]
    ChannelNotFound(u32),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid write key {0:?}")]
    InvalidKey(String),
    #[error("write key already bound to channel {0}")]
    DuplicateKey(u32),
    #[error("corrupt snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub entry_id: u64,
    pub created_at_ms: u64,
    /// `fields[0]` is field1.
    pub fields: [Option<f64>; FIELD_COUNT],
}

impl FeedEntry {
    /// Value of field `n` (1-based).
    pub fn field(&self, n: u8) -> Option<f64> {
        self.fields.get(usize::from(n).checked_sub(1)?).copied().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub write_api_key: String,
    pub field_names: Vec<String>,
    pub entries: Vec<FeedEntry>,
    pub last_update_ms: Option<u64>,
}

impl Channel {
    fn new(id: ChannelId, write_api_key: String) -> Self {
        Self {
            id,
            write_api_key,
            field_names: vec!["bpm".into(), "SpO2".into()],
            entries: Vec::new(),
            last_update_ms: None,
        }
    }

    fn append(&mut self, now_ms: u64, fields: [Option<f64>; FIELD_COUNT]) -> u64 {
        let entry_id = self.entries.len() as u64 + 1;
        self.entries.push(FeedEntry {
            entry_id,
            created_at_ms: now_ms,
            fields,
        });
        self.last_update_ms = Some(now_ms);
        entry_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedQuery {
    /// The last N entries.
    Results(usize),
    /// Entries with `start <= created_at <= end`.
    Range {
        start_ms: u64,
        end_ms: u64,
    },
    All,
}

/// Outcome accounting for one channel over a closed time range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub attempted: u64,
    pub received: u64,
    pub expected: u64,
    /// `received/attempted`, absent when nothing was attempted.
    pub success_ratio: Option<Ratio<u64>>,
    pub success_decimal: Option<String>,
}

/// In-memory channel service. Each channel sits behind its own lock, so
/// writers to one channel serialize while readers get a consistent copy.
#[derive(Debug, Default)]
pub struct TelemetryService {
    channels: RwLock<BTreeMap<ChannelId, Arc<RwLock<Channel>>>>,
}

impl TelemetryService {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_channel(&self, write_api_key: &str) -> Result<ChannelId, TelemetryError> {
        if !is_api_key(write_api_key) {
            return Err(TelemetryError::InvalidKey(write_api_key.to_string()));
        }
        if let Some(id) = self.channel_for_key(write_api_key) {
            return Err(TelemetryError::DuplicateKey(id.0));
        }
        let mut channels = self.channels.write().expect("channel map lock");
        let id = ChannelId(channels.keys().next_back().map_or(1, |c| c.0 + 1));
        channels.insert(id, Arc::new(RwLock::new(Channel::new(id, write_api_key.to_string()))));
        Ok(id)
    }

    pub fn channel_ids(&self) -> Vec<ChannelId> {
        self.channels
            .read()
            .expect("channel map lock")
            .keys()
            .copied()
            .collect()
    }

    fn handle(&self, id: ChannelId) -> Result<Arc<RwLock<Channel>>, TelemetryError> {
        self.channels
            .read()
            .expect("channel map lock")
            .get(&id)
            .cloned()
            .ok_or(TelemetryError::ChannelNotFound(id.0))
    }

    pub fn channel_for_key(&self, key: &str) -> Option<ChannelId> {
        self.channels
            .read()
            .expect("channel map lock")
            .iter()
            .find(|(_, ch)| ch.read().expect("channel lock").write_api_key == key)
            .map(|(id, _)| *id)
    }

    /// Snapshot of one channel.
    pub fn channel(&self, id: ChannelId) -> Result<Channel, TelemetryError> {
        Ok(self.handle(id)?.read().expect("channel lock").clone())
    }

    /// Stores an update and returns its entry id, or 0 when the key is
    /// unknown, no field is present, a field is not numeric, or the channel
    /// was updated less than 15 s ago.
    pub fn handle_update(&self, params: &[(String, String)], now_ms: u64) -> u64 {
        let Some(key) = params.iter().find(|(k, _)| k == "api_key").map(|(_, v)| v) else {
            return 0;
        };
        let Some(id) = self.channel_for_key(key) else {
            return 0;
        };
        let Some(fields) = parse_fields(params) else {
            return 0;
        };
        let Ok(handle) = self.handle(id) else {
            return 0;
        };
        let mut channel = handle.write().expect("channel lock");
        if let Some(last) = channel.last_update_ms {
            if now_ms < last || now_ms - last < RATE_LIMIT_MS {
                return 0;
            }
        }
        channel.append(now_ms, fields)
    }

    pub fn get_feed(&self, id: ChannelId, query: FeedQuery) -> Result<Vec<FeedEntry>, TelemetryError> {
        let handle = self.handle(id)?;
        let channel = handle.read().expect("channel lock");
        let entries = &channel.entries;
        Ok(match query {
            FeedQuery::Results(n) => entries[entries.len().saturating_sub(n)..].to_vec(),
            FeedQuery::Range { start_ms, end_ms } => entries
                .iter()
                .filter(|e| (start_ms..=end_ms).contains(&e.created_at_ms))
                .cloned()
                .collect(),
            FeedQuery::All => entries.clone(),
        })
    }

    pub fn aggregate(&self, id: ChannelId, query: &AggregateQuery) -> Result<Vec<(u64, f64)>, TelemetryError> {
        let handle = self.handle(id)?;
        let channel = handle.read().expect("channel lock");
        aggregate_entries(&channel.entries, query)
    }

    /// Attempts come from the network ledger: HTTP submissions to the update
    /// path carrying this channel's key, within `[start_ms, end_ms]`.
    pub fn delivery_report(
        &self,
        id: ChannelId,
        ledger: &[LedgerEntry],
        expected_interval_s: u64,
        (start_ms, end_ms): (u64, u64),
    ) -> Result<DeliveryReport, TelemetryError> {
        let channel = self.channel(id)?;
        let in_range = |t: u64| (start_ms..=end_ms).contains(&t);
        let attempted = ledger
            .iter()
            .filter(|e| e.class == MessageClass::Http && in_range(e.t_ms))
            .filter(|e| {
                let (path, query) = e.detail.split_once('?').unwrap_or((&e.detail, ""));
                path == UPDATE_PATH
                    && parse_query(query)
                        .iter()
                        .any(|(k, v)| k == "api_key" && *v == channel.write_api_key)
            })
            .count() as u64;
        let received = channel.entries.iter().filter(|e| in_range(e.created_at_ms)).count() as u64;
        let expected = match expected_interval_s {
            0 => 0,
            s => (end_ms - start_ms.min(end_ms)) / (s * 1000),
        };
        let success_ratio = (attempted > 0).then(|| Ratio::new(received, attempted));
        Ok(DeliveryReport {
            attempted,
            received,
            expected,
            success_decimal: success_ratio.as_ref().map(|r| ratio::decimal(r, 4)),
            success_ratio,
        })
    }

    /// Writes one channel's entries as JSON lines.
    pub fn save_snapshot(&self, id: ChannelId, mut out: impl Write) -> Result<(), TelemetryError> {
        for entry in self.get_feed(id, FeedQuery::All)? {
            let line = serde_json::to_string(&entry).expect("feed entry serializes");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Creates a channel from a snapshot, checking that entry ids run 1..N
    /// and timestamps never go backwards.
    pub fn load_snapshot(&self, write_api_key: &str, input: impl BufRead) -> Result<ChannelId, TelemetryError> {
        let mut entries: Vec<FeedEntry> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |reason: String| TelemetryError::Snapshot { line: i + 1, reason };
            let entry: FeedEntry = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if entry.entry_id != entries.len() as u64 + 1 {
                return Err(corrupt(format!("entry id {} out of sequence", entry.entry_id)));
            }
            if entries
                .last()
                .is_some_and(|prev| prev.created_at_ms > entry.created_at_ms)
            {
                return Err(corrupt("timestamp goes backwards".into()));
            }
            entries.push(entry);
        }
        let id = self.create_channel(write_api_key)?;
        let handle = self.handle(id)?;
        let mut channel = handle.write().expect("channel lock");
        channel.last_update_ms = entries.last().map(|e| e.created_at_ms);
        channel.entries = entries;
        Ok(id)
    }
}

fn parse_fields(params: &[(String, String)]) -> Option<[Option<f64>; FIELD_COUNT]> {
    let mut fields = [None; FIELD_COUNT];
    for (key, value) in params {
        let Some(n) = key.strip_prefix("field").and_then(|n| n.parse::<usize>().ok()) else {
            continue;
        };
        if !(1..=FIELD_COUNT).contains(&n) {
            continue;
        }
        let v: f64 = value.trim().parse().ok().filter(|v: &f64| v.is_finite())?;
        fields[n - 1] = Some(v);
    }
    fields.iter().any(Option::is_some).then_some(fields)
}

impl HttpEndpoint for TelemetryService {
    fn handle(&self, method: HttpMethod, target: &str, now_ms: u64) -> HttpReply {
        route(self, method, target, now_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::Delivery;

    const KEY: &str = "ABCD1234EFGH5678";

    fn update(f1: &str, f2: &str) -> Vec<(String, String)> {
        vec![
            ("api_key".into(), KEY.into()),
            ("field1".into(), f1.into()),
            ("field2".into(), f2.into()),
        ]
    }

    fn service() -> (TelemetryService, ChannelId) {
        let svc = TelemetryService::new();
        let id = svc.create_channel(KEY).unwrap();
        (svc, id)
    }

    #[test]
    fn update_ids_and_rejections() {
        let (svc, id) = service();
        assert_eq!(svc.handle_update(&update("72", "98"), 0), 1);
        let mut wrong = update("72", "98");
        wrong[0].1 = "ZZZZ1234EFGH5678".into();
        assert_eq!(svc.handle_update(&wrong, 48_000), 0);
        assert_eq!(svc.handle_update(&update("7x", "98"), 48_000), 0);
        assert_eq!(svc.handle_update(&[("api_key".into(), KEY.into())], 48_000), 0);
        assert_eq!(svc.handle_update(&update("73", "97"), 48_000), 2);
        assert_eq!(svc.get_feed(id, FeedQuery::All).unwrap().len(), 2);
    }

    #[test]
    fn rate_limit() {
        let (svc, id) = service();
        assert_eq!(svc.handle_update(&update("72", "98"), 1_000), 1);
        assert_eq!(svc.handle_update(&update("72", "98"), 15_999), 0);
        assert_eq!(svc.handle_update(&update("72", "98"), 16_000), 2);
        assert_eq!(svc.get_feed(id, FeedQuery::All).unwrap().len(), 2);
    }

    #[test]
    fn feed_queries() {
        let (svc, id) = service();
        assert!(svc.get_feed(id, FeedQuery::Results(3)).unwrap().is_empty());
        for i in 0..5 {
            svc.handle_update(&update("70", "97"), i * 20_000);
        }
        let last2: Vec<u64> = svc
            .get_feed(id, FeedQuery::Results(2))
            .unwrap()
            .iter()
            .map(|e| e.entry_id)
            .collect();
        assert_eq!(last2, vec![4, 5]);
        let ranged = svc
            .get_feed(
                id,
                FeedQuery::Range {
                    start_ms: 20_000,
                    end_ms: 60_000,
                },
            )
            .unwrap();
        assert_eq!(ranged.len(), 3);
        assert!(matches!(
            svc.get_feed(ChannelId(9), FeedQuery::All),
            Err(TelemetryError::ChannelNotFound(9))
        ));
    }

    #[test]
    fn delivery_ratio() {
        let (svc, id) = service();
        let mut ledger = Vec::new();
        for i in 1..=75u64 {
            let t = i * 48_000;
            let outcome = if i == 10 || i == 50 {
                Delivery::Dropped
            } else {
                Delivery::Delivered
            };
            ledger.push(LedgerEntry {
                t_ms: t,
                class: MessageClass::Http,
                outcome,
                from: "+1".into(),
                to: "api".into(),
                detail: format!("/update?api_key={KEY}&field1=70&field2=97"),
            });
            if outcome == Delivery::Delivered {
                svc.handle_update(&update("70", "97"), t);
            }
        }
        let report = svc.delivery_report(id, &ledger, 48, (0, 3_600_000)).unwrap();
        assert_eq!((report.attempted, report.received, report.expected), (75, 73, 75));
        assert_eq!(report.success_ratio, Some(Ratio::new(73, 75)));
        assert_eq!(report.success_decimal.as_deref(), Some("0.9733"));

        let empty = svc.delivery_report(id, &[], 48, (0, 3_600_000)).unwrap();
        assert_eq!(empty.success_ratio, None);
    }

    #[test]
    fn snapshot_round_trip() {
        let (svc, id) = service();
        for i in 0..4 {
            svc.handle_update(&update("71", "96.5"), i * 48_000);
        }
        let mut buf = Vec::new();
        svc.save_snapshot(id, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 4);

        let other = TelemetryService::new();
        let restored = other.load_snapshot(KEY, buf.as_slice()).unwrap();
        assert_eq!(
            other.get_feed(restored, FeedQuery::All).unwrap(),
            svc.get_feed(id, FeedQuery::All).unwrap()
        );
        // the rate limit carries over
        assert_eq!(other.handle_update(&update("70", "97"), 144_000 + 1_000), 0);

        let gap = String::from_utf8(buf)
            .unwrap()
            .replace("\"entry_id\":2", "\"entry_id\":7");
        assert!(matches!(
            TelemetryService::new().load_snapshot(KEY, gap.as_bytes()),
            Err(TelemetryError::Snapshot { line: 2, .. })
        ));
    }

    #[test]
    fn keys_are_unique_and_well_formed() {
        let (svc, _) = service();
        assert!(matches!(svc.create_channel(KEY), Err(TelemetryError::DuplicateKey(1))));
        assert!(matches!(
            svc.create_channel("short"),
            Err(TelemetryError::InvalidKey(_))
        ));
        assert_eq!(svc.create_channel("ZZZZ1234EFGH5678").unwrap(), ChannelId(2));
    }

    #[test]
    fn concurrent_writers_keep_ids_dense() {
        let svc = Arc::new(TelemetryService::new());
        let keys: Vec<String> = (0..4).map(|i| format!("KEY{i}000000000000")).collect();
        let ids: Vec<ChannelId> = keys.iter().map(|k| svc.create_channel(k).unwrap()).collect();
        std::thread::scope(|s| {
            for key in &keys {
                let svc = Arc::clone(&svc);
                s.spawn(move || {
                    for i in 0..200u64 {
                        let params = vec![("api_key".to_string(), key.clone()), ("field1".into(), "1".into())];
                        svc.handle_update(&params, i * RATE_LIMIT_MS);
                    }
                });
            }
        });
        for id in ids {
            let feed = svc.get_feed(id, FeedQuery::All).unwrap();
            assert_eq!(feed.len(), 200);
            assert!(feed.iter().enumerate().all(|(i, e)| e.entry_id == i as u64 + 1));
        }
    }
}
