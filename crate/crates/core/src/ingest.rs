//! Loading observed spot series from CSV.
//!
//! Timestamps may be ISO-8601 date-times (naive ones are read as UTC),
//! integer epoch seconds or plain floating-point model times. The series is
//! mapped onto an equidistant unit-horizon grid; the original span is kept in
//! the report so callers can rescale rates to calendar units.

use std::fs::File;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GridSpec, SampledPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GapPolicy {
    Reject,
    /// Fill a single missing observation with the previous value; longer gaps are rejected.
    ForwardFillMax1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DedupPolicy {
    Reject,
    KeepFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TimeKind {
    /// Seconds since the Unix epoch.
    Calendar,
    /// Model time units.
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestRules {
    pub timestamp_column: String,
    pub price_column: String,
    /// Sampling step in timestamp units (seconds for calendar data). Inferred
    /// as the smallest positive spacing when absent.
    pub expected_step: Option<f64>,
    pub gap_policy: GapPolicy,
    pub dedup_policy: DedupPolicy,
}

impl Default for IngestRules {
    fn default() -> Self {
        Self {
            timestamp_column: "t".into(),
            price_column: "X".into(),
            expected_step: None,
            gap_policy: GapPolicy::Reject,
            dedup_policy: DedupPolicy::Reject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub observations: usize,
    pub time_kind: TimeKind,
    pub step: f64,
    /// Span of the series in timestamp units.
    pub span: f64,
    /// Span in years of 365 days, for calendar data.
    pub span_years: Option<f64>,
    pub filled: Vec<String>,
    pub dropped_duplicates: Vec<String>,
}

const SECONDS_PER_YEAR: f64 = 365.0 * 86_400.0;

fn parse_calendar(s: &str) -> Option<f64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64);
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|dt| dt.and_utc().timestamp() as f64)
}

/// A column of integers is epoch seconds; any non-integer number makes the
/// whole column model time; anything else must be an ISO-8601 date-time.
fn parse_timestamps(raw: &[String]) -> Result<(Vec<f64>, TimeKind)> {
    let unreadable = |k: usize| Error::Ingest(format!("line {}: unreadable timestamp `{}`", k + 2, raw[k]));
    if raw.iter().all(|s| s.parse::<i64>().is_ok()) {
        return Ok((raw.iter().map(|s| s.parse::<i64>().unwrap() as f64).collect(), TimeKind::Calendar));
    }
    if raw[0].parse::<f64>().is_ok() {
        let times = raw
            .iter()
            .enumerate()
            .map(|(k, s)| s.parse::<f64>().ok().filter(|t| t.is_finite()).ok_or_else(|| unreadable(k)))
            .collect::<Result<Vec<_>>>()?;
        return Ok((times, TimeKind::Numeric));
    }
    let times = raw
        .iter()
        .enumerate()
        .map(|(k, s)| parse_calendar(s).ok_or_else(|| unreadable(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok((times, TimeKind::Calendar))
}

fn show(t: f64, kind: TimeKind) -> String {
    match kind {
        TimeKind::Calendar => DateTime::<Utc>::from_timestamp(t as i64, 0)
            .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_else(|| t.to_string()),
        TimeKind::Numeric => t.to_string(),
    }
}

/// Load `(timestamp, price)` pairs and map them onto a unit-horizon grid.
pub fn load_spot_csv(path: &Path, rules: &IngestRules) -> Result<(SampledPath, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Ingest(format!("column `{name}` not found in {}", path.display())))
    };
    let t_col = column(&rules.timestamp_column)?;
    let x_col = column(&rules.price_column)?;

    let mut raw_times = Vec::new();
    let mut prices = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        raw_times.push(record.get(t_col).unwrap_or("").trim().to_string());
        let raw_x = record.get(x_col).unwrap_or("").trim();
        let x: f64 = raw_x
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| Error::Ingest(format!("line {}: price `{raw_x}` is not a finite number", k + 2)))?;
        prices.push(x);
    }
    if raw_times.is_empty() {
        return Err(Error::Ingest(format!("{} has no data rows", path.display())));
    }
    let (times, kind) = parse_timestamps(&raw_times)?;
    let mut rows: Vec<(f64, f64)> = times.into_iter().zip(prices).collect();
    let rows_read = rows.len();

    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut dropped = Vec::new();
    let mut unique: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for (t, x) in rows {
        if unique.last().is_some_and(|&(prev, _)| prev == t) {
            match rules.dedup_policy {
                DedupPolicy::Reject => return Err(Error::Ingest(format!("duplicate timestamp {}", show(t, kind)))),
                DedupPolicy::KeepFirst => dropped.push(show(t, kind)),
            }
        } else {
            unique.push((t, x));
        }
    }
    if unique.len() < 3 {
        return Err(Error::Ingest("need at least three distinct observations".into()));
    }

    let step = match rules.expected_step {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => return Err(Error::Ingest(format!("expected step must be > 0, got {s}"))),
        None => unique.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min),
    };

    let mut values = vec![unique[0].1];
    let mut filled = Vec::new();
    for w in unique.windows(2) {
        let ((t0, x0), (t1, x1)) = (w[0], w[1]);
        let ratio = (t1 - t0) / step;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-6 || steps < 1.0 {
            return Err(Error::Ingest(format!(
                "irregular spacing between {} and {}",
                show(t0, kind),
                show(t1, kind)
            )));
        }
        if steps > 1.0 {
            if rules.gap_policy == GapPolicy::ForwardFillMax1 && steps == 2.0 {
                values.push(x0);
                filled.push(show(t0 + step, kind));
            } else {
                return Err(Error::Ingest(format!(
                    "gap of {} missing observation(s) after {}",
                    steps - 1.0,
                    show(t0, kind)
                )));
            }
        }
        values.push(x1);
    }

    let span = unique[unique.len() - 1].0 - unique[0].0;
    let grid = GridSpec::unit(values.len() - 1)?;
    let report = IngestReport {
        rows_read,
        observations: values.len(),
        time_kind: kind,
        step,
        span,
        span_years: (kind == TimeKind::Calendar).then_some(span / SECONDS_PER_YEAR),
        filled,
        dropped_duplicates: dropped,
    };
    Ok((SampledPath::new(grid, values)?, report))
}
