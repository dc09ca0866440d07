use std::fmt;

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::telemetry::{aggregate_entries, AggregateQuery, BucketUnit, FeedEntry, Statistic, TelemetryError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tolerance {
    Exact,
    Relative(f64),
    Absolute(f64),
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => write!(f, "exact"),
            Self::Relative(r) => write!(f, "±{}%", r * 100.0),
            Self::Absolute(a) if *a < 1e-3 => write!(f, "±{a:e}"),
            Self::Absolute(a) => write!(f, "±{a}"),
        }
    }
}

/// One reference figure against its value in a run. A missing run value
/// renders as "undefined" and is always flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub reference: f64,
    pub run: Option<f64>,
    pub relative_delta: Option<f64>,
    pub tolerance: Tolerance,
    pub flagged: bool,
}

impl ComparisonRow {
    fn new(metric: &str, reference: f64, run: Option<f64>, tolerance: Tolerance) -> Self {
        let relative_delta = run.filter(|_| reference != 0.0).map(|v| (v - reference) / reference);
        let within = run.is_some_and(|v| match tolerance {
            Tolerance::Exact => (v - reference).abs() < 1e-9,
            Tolerance::Relative(r) => ((v - reference) / reference).abs() <= r,
            Tolerance::Absolute(a) => (v - reference).abs() <= a,
        });
        Self {
            metric: metric.to_string(),
            reference,
            run,
            relative_delta,
            tolerance,
            flagged: !within,
        }
    }

    pub fn run_display(&self) -> String {
        self.run.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
    }
}

impl fmt::Display for ComparisonRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let delta = self
            .relative_delta
            .map_or_else(|| "-".to_string(), |d| format!("{:+.3}%", d * 100.0));
        write!(
            f,
            "{:<28} {:>12.4} {:>12} {:>10} {:>8} {}",
            self.metric,
            self.reference,
            self.run_display(),
            delta,
            self.tolerance.to_string(),
            if self.flagged { "FLAG" } else { "ok" }
        )
    }
}

const REF_ENDURANCE_H: f64 = 9.0;
const REF_ATTEMPTS_PER_H: f64 = 75.0;
const REF_RECEIVED_PER_H: f64 = 73.0;
const REF_KB_PER_H: f64 = 123.70;
const REF_MB_PER_DAY: f64 = 2.9688;
const DATA_TOLERANCE: f64 = 0.005;

/// Published figures set against a run; counts are normalized to one hour.
pub fn compare_to_reference(report: &RunReport) -> Vec<ComparisonRow> {
    let per_hour = |n: u64| (report.duration_ms > 0).then(|| n as f64 * 3_600_000.0 / report.duration_ms as f64);
    let ratio = report.success_ratio.map(|r| *r.numer() as f64 / *r.denom() as f64);
    vec![
        ComparisonRow::new(
            "endurance_hours",
            REF_ENDURANCE_H,
            Some(report.endurance_hours),
            Tolerance::Exact,
        ),
        ComparisonRow::new(
            "attempts_per_hour",
            REF_ATTEMPTS_PER_H,
            per_hour(report.uploads_attempted),
            Tolerance::Exact,
        ),
        ComparisonRow::new(
            "received_per_hour",
            REF_RECEIVED_PER_H,
            per_hour(report.uploads_received),
            Tolerance::Exact,
        ),
        ComparisonRow::new(
            "success_ratio",
            REF_RECEIVED_PER_H / REF_ATTEMPTS_PER_H,
            ratio,
            Tolerance::Absolute(1e-9),
        ),
        ComparisonRow::new(
            "kb_per_hour",
            REF_KB_PER_H,
            report.kb_per_hour,
            Tolerance::Relative(DATA_TOLERANCE),
        ),
        ComparisonRow::new(
            "mb_per_day",
            REF_MB_PER_DAY,
            report.mb_per_day,
            Tolerance::Relative(DATA_TOLERANCE),
        ),
        ComparisonRow::new(
            "bpm_error_vs_generator",
            0.0,
            report.bpm_abs_error,
            Tolerance::Absolute(1.0),
        ),
    ]
}

/// CSV of bucket averages for bpm (field1) and SpO2 (field2).
pub fn export_series(entries: &[FeedEntry], unit: BucketUnit) -> Result<String, TelemetryError> {
    let query = |field| AggregateQuery::new(unit, 1, Statistic::Average, field);
    let bpm = aggregate_entries(entries, &query(1))?;
    let spo2 = aggregate_entries(entries, &query(2))?;
    let mut starts: Vec<u64> = bpm.iter().chain(&spo2).map(|(s, _)| *s).collect();
    starts.sort_unstable();
    starts.dedup();

    let lookup = |series: &[(u64, f64)], s: u64| {
        series
            .iter()
            .find(|(t, _)| *t == s)
            .map_or_else(String::new, |(_, v)| v.to_string())
    };
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["bucket_start_ms", "avg_bpm", "avg_spo2"])
        .expect("write to memory");
    for s in starts {
        out.write_record([s.to_string(), lookup(&bpm, s), lookup(&spo2, s)])
            .expect("write to memory");
    }
    Ok(String::from_utf8(out.into_inner().expect("flush to memory")).expect("csv is utf-8"))
}
