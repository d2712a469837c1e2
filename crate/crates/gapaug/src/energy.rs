//! Sampling-frequency energy accounting.
//!
//! Replays a chronologically sorted decision trace (timestamp, class) and
//! totals the samplings saved by slowing down during stable spans (class 0)
//! and spent by speeding up during unstable spans (class 2). Classes:
//! 0 = reduce frequency, 1 = keep, 2 = increase.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_ENERGY_PER_SAMPLING_MWH: f64 = 3.73;
pub const DEFAULT_BASE_INTERVAL_MIN: f64 = 4.0;
pub const DEFAULT_LOW_INTERVAL_MIN: f64 = 8.0;
pub const DEFAULT_HIGH_INTERVAL_MIN: f64 = 2.0;

/// Sampling intervals in minutes for the three regimes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyIntervals {
    pub base_min: f64,
    pub low_min: f64,
    pub high_min: f64,
}

impl Default for EnergyIntervals {
    fn default() -> Self {
        EnergyIntervals {
            base_min: DEFAULT_BASE_INTERVAL_MIN,
            low_min: DEFAULT_LOW_INTERVAL_MIN,
            high_min: DEFAULT_HIGH_INTERVAL_MIN,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub energy_per_sampling_mwh: f64,
    pub saved_samplings: u64,
    pub extra_samplings: u64,
    pub saved_energy_mwh: f64,
    pub extra_energy_mwh: f64,
    /// Total span duration per class, in hours.
    pub class_durations_hours: Vec<f64>,
}

/// One decision record: seconds since epoch and the decided class.
pub type TraceRecord = (f64, usize);

/// Read a `timestamp,class` CSV trace. Timestamps may be epoch seconds or
/// `YYYY-MM-DDTHH:MM:SS` (an optional trailing `Z` is tolerated); records
/// must be chronologically sorted.
pub fn read_decision_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("timestamp") {
        return Err(Error::parse(1, "expected header 'timestamp,class'"));
    }
    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::parse(line, e.to_string()))?;
        let ts_raw = record.get(0).unwrap_or("").trim();
        let seconds = parse_timestamp(ts_raw)
            .ok_or_else(|| Error::parse(line, format!("bad timestamp '{ts_raw}'")))?;
        let class: usize = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, "non-integer class"))?;
        if class > 2 {
            return Err(Error::parse(line, format!("class {class} out of range 0..=2")));
        }
        if let Some(&(prev, _)) = records.last() {
            if seconds < prev {
                return Err(Error::parse(line, "trace is not chronologically sorted"));
            }
        }
        records.push((seconds, class));
    }
    Ok(records)
}

fn parse_timestamp(raw: &str) -> Option<f64> {
    if let Ok(v) = raw.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let trimmed = raw.strip_suffix('Z').unwrap_or(raw);
    let dt = chrono::NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| chrono::NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%d %H:%M:%S"))
        .ok()?;
    Some(dt.and_utc().timestamp() as f64)
}

/// Replay a sorted trace into an energy ledger.
///
/// For each contiguous class-0 span of `d` minutes the node samples at the
/// low rate instead of the base rate, saving `floor(d/base) - floor(d/low)`
/// samplings; each class-2 span costs `floor(d/high) - floor(d/base)` extra
/// samplings. Span duration runs from a span's first record to its last.
pub fn replay_energy(
    trace: &[TraceRecord],
    energy_per_sampling_mwh: f64,
    intervals: EnergyIntervals,
) -> Result<EnergyLedger> {
    if energy_per_sampling_mwh <= 0.0 {
        return Err(Error::invalid("energy per sampling must be positive"));
    }
    for v in [intervals.base_min, intervals.low_min, intervals.high_min] {
        if v <= 0.0 {
            return Err(Error::invalid("sampling intervals must be positive"));
        }
    }
    for pair in trace.windows(2) {
        if pair[1].0 < pair[0].0 {
            return Err(Error::invalid("trace is not chronologically sorted"));
        }
    }

    let mut saved: u64 = 0;
    let mut extra: u64 = 0;
    let mut durations = [0.0f64; 3];

    let mut i = 0;
    while i < trace.len() {
        let class = trace[i].1;
        let start = trace[i].0;
        let mut j = i;
        while j + 1 < trace.len() && trace[j + 1].1 == class {
            j += 1;
        }
        let minutes = (trace[j].0 - start) / 60.0;
        durations[class] += minutes / 60.0;
        match class {
            0 => {
                let base = (minutes / intervals.base_min).floor() as u64;
                let low = (minutes / intervals.low_min).floor() as u64;
                saved += base.saturating_sub(low);
            }
            2 => {
                let high = (minutes / intervals.high_min).floor() as u64;
                let base = (minutes / intervals.base_min).floor() as u64;
                extra += high.saturating_sub(base);
            }
            _ => {}
        }
        i = j + 1;
    }

    Ok(EnergyLedger {
        energy_per_sampling_mwh,
        saved_samplings: saved,
        extra_samplings: extra,
        saved_energy_mwh: saved as f64 * energy_per_sampling_mwh,
        extra_energy_mwh: extra as f64 * energy_per_sampling_mwh,
        class_durations_hours: durations.to_vec(),
    })
}
