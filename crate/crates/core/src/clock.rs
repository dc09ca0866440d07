//! Simulated time. Every component counts milliseconds from the start of a
//! run; wall-clock rendering maps that origin to a fixed epoch.

use chrono::{DateTime, TimeDelta, Utc};

/// Wall-clock instant of `t_ms = 0`: 2020-01-01T00:00:00Z.
pub const SIM_EPOCH_UNIX_S: i64 = 1_577_836_800;

pub fn utc(t_ms: u64) -> DateTime<Utc> {
    let epoch = DateTime::from_timestamp(SIM_EPOCH_UNIX_S, 0).expect("epoch in range");
    epoch + TimeDelta::milliseconds(i64::try_from(t_ms).unwrap_or(i64::MAX / 2))
}

/// RFC 3339 with second precision, as the feed API renders timestamps.
pub fn rfc3339(t_ms: u64) -> String {
    utc(t_ms).format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
