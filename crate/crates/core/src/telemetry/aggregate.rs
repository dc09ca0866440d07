use serde::{Deserialize, Serialize};

use super::{FeedEntry, TelemetryError, FIELD_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketUnit {
    Minutes,
    Hours,
    Days,
}

impl BucketUnit {
    pub fn span_ms(self) -> u64 {
        match self {
            Self::Minutes => 60_000,
            Self::Hours => 3_600_000,
            Self::Days => 86_400_000,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Minutes => "minutes",
            Self::Hours => "hours",
            Self::Days => "days",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "minutes" | "minute" => Some(Self::Minutes),
            "hours" | "hour" => Some(Self::Hours),
            "days" | "day" => Some(Self::Days),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Average,
    Min,
    Max,
    Last,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Average => "average",
            Self::Min => "min",
            Self::Max => "max",
            Self::Last => "last",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "average" | "avg" | "mean" => Some(Self::Average),
            "min" => Some(Self::Min),
            "max" => Some(Self::Max),
            "last" => Some(Self::Last),
            _ => None,
        }
    }
}

/// `n` units per bucket over `[start, end]`. Without an explicit range the
/// query covers whole buckets from 0 through the last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateQuery {
    pub unit: BucketUnit,
    pub n: u32,
    pub stat: Statistic,
    /// 1-based field index.
    pub field: u8,
    pub range: Option<(u64, u64)>,
}

impl AggregateQuery {
    pub fn new(unit: BucketUnit, n: u32, stat: Statistic, field: u8) -> Self {
        Self {
            unit,
            n,
            stat,
            field,
            range: None,
        }
    }

    pub fn with_range(mut self, start_ms: u64, end_ms: u64) -> Self {
        self.range = Some((start_ms, end_ms));
        self
    }

    pub fn span_ms(&self) -> u64 {
        self.unit.span_ms() * u64::from(self.n)
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        let bad = |m: String| Err(TelemetryError::InvalidQuery(m));
        if self.n == 0 {
            return bad("bucket count must be positive".into());
        }
        if !(1..=FIELD_COUNT as u8).contains(&self.field) {
            return bad(format!("unknown field {}", self.field));
        }
        if let Some((start, end)) = self.range {
            if start >= end {
                return bad(format!("range start {start} not before end {end}"));
            }
            if (end - start) % self.span_ms() != 0 {
                return bad("range is not a whole number of buckets".into());
            }
        }
        Ok(())
    }
}

/// Buckets are `[s, s + span)` except the last, which also takes an entry
/// stamped exactly at the range end. Empty buckets are omitted.
pub fn aggregate_entries(entries: &[FeedEntry], query: &AggregateQuery) -> Result<Vec<(u64, f64)>, TelemetryError> {
    query.validate()?;
    let span = query.span_ms();
    let (start, end) = match query.range {
        Some(r) => r,
        None => {
            let last = entries.last().map_or(0, |e| e.created_at_ms);
            (0, last.div_ceil(span).max(1) * span)
        }
    };
    let last_bucket = (end - start) / span - 1;

    let mut out: Vec<(u64, Acc)> = Vec::new();
    for entry in entries {
        let t = entry.created_at_ms;
        if t < start || t > end {
            continue;
        }
        let Some(v) = entry.field(query.field) else {
            continue;
        };
        let bucket = ((t - start) / span).min(last_bucket);
        let bucket_start = start + bucket * span;
        match out.last_mut() {
            Some((s, acc)) if *s == bucket_start => acc.push(v),
            _ => out.push((bucket_start, Acc::new(v))),
        }
    }
    Ok(out.into_iter().map(|(s, acc)| (s, acc.value(query.stat))).collect())
}

struct Acc {
    sum: f64,
    count: u64,
    min: f64,
    max: f64,
    last: f64,
}

impl Acc {
    fn new(v: f64) -> Self {
        Self {
            sum: v,
            count: 1,
            min: v,
            max: v,
            last: v,
        }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.last = v;
    }

    fn value(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Average => self.sum / self.count as f64,
            Statistic::Min => self.min,
            Statistic::Max => self.max,
            Statistic::Last => self.last,
        }
    }
}
