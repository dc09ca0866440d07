use super::{PpgSample, VitalsReading};

/// Shortest window `compute_bpm` will average over.
pub const MIN_BPM_WINDOW_MS: u64 = 5_000;

const SPO2_INTERCEPT: f64 = 110.0;
const SPO2_SLOPE: f64 = 25.0;
const MAX_INTERVAL_CV: f64 = 0.25;
const MIN_SPAN_MS: u64 = 2_000;

/// Thresholds for IR-channel peak detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    /// Width of the centred moving-average baseline.
    pub baseline_ms: u64,
    /// Fraction of the last peak excursion a sample must exceed.
    pub threshold_fraction: f64,
    pub refractory_ms: u64,
    /// Peaks smaller than this (counts above baseline) are noise.
    pub min_excursion: f64,
    /// Without a beat for this long, the excursion estimate halves.
    pub decay_ms: u64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            baseline_ms: 1_000,
            threshold_fraction: 0.5,
            refractory_ms: 250,
            min_excursion: 40.0,
            decay_ms: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpmEstimate {
    Bpm(u16),
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spo2Estimate {
    Percent(u8),
    NoContact,
}

/// Timestamps of IR pulse peaks.
///
/// A sample belongs to a candidate peak while it sits more than
/// `threshold_fraction` of the recent excursion above the baseline; the
/// candidate's maximum, refined to sub-sample precision, is the beat. Candidates inside the refractory period
/// or below `min_excursion` are discarded. A peak still rising at the end of
/// the input is not reported.
pub fn detect_beats(samples: &[PpgSample], params: &DetectionParams) -> Vec<u64> {
    if samples.len() < 2 {
        return Vec::new();
    }
    let first = samples[0].t_ms;
    let step = samples[1].t_ms.saturating_sub(first);
    if samples[samples.len() - 1].t_ms - first + step < MIN_SPAN_MS {
        return Vec::new();
    }

    let excursion = excursions(samples, params.baseline_ms);
    let mut estimate = samples
        .iter()
        .zip(&excursion)
        .take_while(|(s, _)| s.t_ms <= first + params.baseline_ms)
        .map(|(_, &d)| d)
        .fold(params.min_excursion, f64::max);
    let mut estimate_at = first;

    let mut beats = Vec::new();
    let mut last_beat: Option<u64> = None;
    let mut candidate: Option<usize> = None;

    for (i, sample) in samples.iter().enumerate() {
        if sample.t_ms - estimate_at >= params.decay_ms {
            estimate = (estimate * 0.5).max(params.min_excursion);
            estimate_at = sample.t_ms;
        }
        if excursion[i] > params.threshold_fraction * estimate {
            candidate = match candidate {
                Some(best) if excursion[best] >= excursion[i] => Some(best),
                _ => Some(i),
            };
        } else if let Some(best) = candidate.take() {
            let t = refine_peak(samples, &excursion, best);
            let clear = last_beat.is_none_or(|prev| t.saturating_sub(prev) >= params.refractory_ms);
            if clear && excursion[best] >= params.min_excursion {
                beats.push(t);
                last_beat = Some(t);
                estimate = excursion[best];
                estimate_at = t;
            }
        }
    }
    beats
}

/// Peak time with a parabola fitted through the sample maximum and its
/// neighbours, which keeps beat timing well inside one sample period.
fn refine_peak(samples: &[PpgSample], excursion: &[f64], i: usize) -> u64 {
    let t = samples[i].t_ms;
    if i == 0 || i + 1 >= samples.len() {
        return t;
    }
    let (prev, mid, next) = (excursion[i - 1], excursion[i], excursion[i + 1]);
    let curvature = prev - 2.0 * mid + next;
    if curvature >= 0.0 {
        return t;
    }
    let offset = (0.5 * (prev - next) / curvature).clamp(-0.5, 0.5);
    let step = (samples[i + 1].t_ms - samples[i - 1].t_ms) as f64 / 2.0;
    (t as f64 + offset * step).round() as u64
}

/// IR value minus a centred moving average of width `baseline_ms`.
fn excursions(samples: &[PpgSample], baseline_ms: u64) -> Vec<f64> {
    let half = baseline_ms / 2;
    let mut prefix = Vec::with_capacity(samples.len() + 1);
    prefix.push(0u64);
    for s in samples {
        prefix.push(prefix[prefix.len() - 1] + u64::from(s.ir));
    }
    let (mut lo, mut hi) = (0usize, 0usize);
    samples
        .iter()
        .map(|s| {
            while samples[lo].t_ms + half < s.t_ms {
                lo += 1;
            }
            while hi < samples.len() && samples[hi].t_ms <= s.t_ms + half {
                hi += 1;
            }
            let mean = (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64;
            f64::from(s.ir) - mean
        })
        .collect()
}

/// Heart rate over the beats in the `window_ms` ending at the latest beat.
pub fn compute_bpm(beats: &[u64], window_ms: u64) -> BpmEstimate {
    let Some(&last) = beats.last() else {
        return BpmEstimate::Unstable;
    };
    let start = last.saturating_sub(window_ms.max(MIN_BPM_WINDOW_MS));
    let in_window: Vec<u64> = beats.iter().copied().filter(|&b| b >= start).collect();
    if in_window.len() < 3 {
        return BpmEstimate::Unstable;
    }
    let intervals: Vec<f64> = in_window.windows(2).map(|w| w[1] as f64 - w[0] as f64).collect();
    let n = intervals.len() as f64;
    let mean = intervals.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return BpmEstimate::Unstable;
    }
    let variance = intervals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if variance.sqrt() / mean > MAX_INTERVAL_CV {
        return BpmEstimate::Unstable;
    }
    BpmEstimate::Bpm((60_000.0 / mean).round() as u16)
}

/// Calibration line from ratio-of-ratios to saturation percent.
pub fn spo2_from_ratio(ratio: f64) -> u8 {
    (SPO2_INTERCEPT - SPO2_SLOPE * ratio).round().clamp(0.0, 100.0) as u8
}

/// SpO2 over the trailing `window_ms` of `samples`.
pub fn compute_spo2(samples: &[PpgSample], window_ms: u64) -> Spo2Estimate {
    let window = trailing(samples, window_ms);
    let beats = detect_beats(window, &DetectionParams::default());
    spo2_with_beats(window, &beats)
}

fn spo2_with_beats(window: &[PpgSample], beats: &[u64]) -> Spo2Estimate {
    if window.is_empty() || beats.len() < 2 {
        return Spo2Estimate::NoContact;
    }
    let n = window.len() as f64;
    let dc_red = window.iter().map(|s| f64::from(s.red)).sum::<f64>() / n;
    let dc_ir = window.iter().map(|s| f64::from(s.ir)).sum::<f64>() / n;
    let ac_red = peak_to_trough(window.iter().map(|s| s.red));
    let ac_ir = peak_to_trough(window.iter().map(|s| s.ir));
    if dc_red == 0.0 || dc_ir == 0.0 || ac_ir == 0.0 {
        return Spo2Estimate::NoContact;
    }
    let ratio = (ac_red / dc_red) / (ac_ir / dc_ir);
    Spo2Estimate::Percent(spo2_from_ratio(ratio))
}

fn peak_to_trough(values: impl Iterator<Item = u16>) -> f64 {
    let (lo, hi) = values.fold((u16::MAX, 0u16), |(lo, hi), v| (lo.min(v), hi.max(v)));
    f64::from(hi.saturating_sub(lo))
}

fn trailing(samples: &[PpgSample], window_ms: u64) -> &[PpgSample] {
    let Some(last) = samples.last() else {
        return samples;
    };
    let start = last.t_ms.saturating_sub(window_ms);
    let skip = samples.partition_point(|s| s.t_ms < start);
    &samples[skip..]
}

/// Full reading for the trailing window: beats, bpm, SpO2 and quality.
pub fn assess_window(samples: &[PpgSample], window_ms: u64, params: &DetectionParams) -> VitalsReading {
    let window = trailing(samples, window_ms);
    let t_ms = window.last().map_or(0, |s| s.t_ms);
    let beats = detect_beats(window, params);
    let spo2 = match spo2_with_beats(window, &beats) {
        Spo2Estimate::Percent(p) => p,
        Spo2Estimate::NoContact => return VitalsReading::no_contact(t_ms),
    };
    match compute_bpm(&beats, window_ms) {
        BpmEstimate::Bpm(bpm) => VitalsReading::good(t_ms, bpm, spo2).unwrap_or_else(|_| VitalsReading::unstable(t_ms)),
        BpmEstimate::Unstable => VitalsReading::unstable(t_ms),
    }
}
