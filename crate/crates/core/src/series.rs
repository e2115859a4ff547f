//! Meter records, CSV ingestion, differencing, and daily peaks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Meter resolutions accepted by [`EnergySeries`].
pub const ALLOWED_RESOLUTIONS: [u32; 4] = [5, 15, 30, 60];

/// A uniformly sampled per-interval energy record.
///
/// `values[i]` is the energy in kWh consumed over the interval starting at
/// `start_time + i * resolution_minutes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    start_time: DateTime<Utc>,
    resolution_minutes: u32,
    values: Vec<f64>,
    meter_id: String,
}

impl EnergySeries {
    pub fn new(
        start_time: DateTime<Utc>,
        resolution_minutes: u32,
        values: Vec<f64>,
        meter_id: impl Into<String>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("no values".into()));
        }
        if !ALLOWED_RESOLUTIONS.contains(&resolution_minutes) {
            return Err(Error::InvalidSeries(format!(
                "resolution {resolution_minutes} min not in {ALLOWED_RESOLUTIONS:?}"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidSeries(format!(
                "value {v} at index {i} is negative or non-finite"
            )));
        }
        Ok(Self {
            start_time,
            resolution_minutes,
            values,
            meter_id: meter_id.into(),
        })
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn resolution_minutes(&self) -> u32 {
        self.resolution_minutes
    }

    /// Interval length in hours.
    pub fn delta_hours(&self) -> f64 {
        f64::from(self.resolution_minutes) / 60.0
    }

    pub fn delta(&self) -> Duration {
        Duration::minutes(i64::from(self.resolution_minutes))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meter_id(&self) -> &str {
        &self.meter_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Start timestamp of interval `i`.
    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start_time + self.delta() * i as i32
    }

    /// Timestamp one interval past the last value.
    pub fn end_time(&self) -> DateTime<Utc> {
        self.timestamp(self.values.len())
    }

    /// Number of whole intervals that start strictly before `t`.
    pub fn count_before(&self, t: DateTime<Utc>) -> usize {
        let mins = (t - self.start_time).num_minutes();
        if mins <= 0 {
            return 0;
        }
        let step = i64::from(self.resolution_minutes);
        let n = (mins + step - 1) / step;
        (n as usize).min(self.values.len())
    }

    /// Values of the intervals starting strictly before `t`.
    pub fn values_before(&self, t: DateTime<Utc>) -> &[f64] {
        &self.values[..self.count_before(t)]
    }

    /// Sub-series `[from, to)` by index.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.values.len() {
            return Err(Error::InvalidSeries(format!(
                "slice {from}..{to} out of range for length {}",
                self.values.len()
            )));
        }
        Ok(Self {
            start_time: self.timestamp(from),
            resolution_minutes: self.resolution_minutes,
            values: self.values[from..to].to_vec(),
            meter_id: self.meter_id.clone(),
        })
    }

    /// Multiplies every value by `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.start_time,
            self.resolution_minutes,
            self.values.iter().map(|v| v * k).collect(),
            self.meter_id.clone(),
        )
    }
}

/// Column mapping and gap policy for [`ingest_csv`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub energy_column: String,
    /// Longest run of missing intervals that is filled by interpolation.
    pub max_gap_fill: usize,
    /// Meter id to attach; defaults to the file stem.
    pub meter_id: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            energy_column: "energy_kwh".into(),
            max_gap_fill: 4,
            meter_id: None,
        }
    }
}

/// RFC 3339, or a naive `YYYY-MM-DD[T ]HH:MM[:SS]` read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Reads a meter CSV into an [`EnergySeries`].
///
/// The resolution is the smallest spacing between consecutive rows. Runs of
/// up to `schema.max_gap_fill` missing intervals are linearly interpolated;
/// longer gaps, misaligned timestamps, and out-of-order rows are errors.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<EnergySeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let meter_id = schema.meter_id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    read_csv(BufReader::new(file), schema, meter_id)
}

/// Same as [`ingest_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
    meter_id: String,
) -> Result<EnergySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::MalformedRow {
            line: 1,
            reason: format!("missing column `{name}`"),
        })
    };
    let ts_idx = find(&schema.timestamp_column)?;
    let e_idx = find(&schema.energy_column)?;

    let mut rows: Vec<(usize, DateTime<Utc>, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let ts_raw = rec.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("unparseable timestamp `{ts_raw}`"),
        })?;
        let e_raw = rec.get(e_idx).unwrap_or("");
        let e: f64 = e_raw.parse().map_err(|_| Error::MalformedRow {
            line,
            reason: format!("unparseable energy `{e_raw}`"),
        })?;
        if !e.is_finite() || e < 0.0 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("energy {e} is negative or non-finite"),
            });
        }
        rows.push((line, ts, e));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }

    let step = rows
        .windows(2)
        .map(|w| (w[1].1 - w[0].1).num_seconds())
        .filter(|s| *s > 0)
        .min()
        .unwrap_or(15 * 60);
    if step % 60 != 0 || !ALLOWED_RESOLUTIONS.contains(&((step / 60) as u32)) {
        return Err(Error::NonUniformSpacing {
            line: rows.get(1).map_or(2, |r| r.0),
            reason: format!("spacing of {step} s is not a supported resolution"),
        });
    }

    let mut values = Vec::with_capacity(rows.len());
    values.push(rows[0].2);
    for w in rows.windows(2) {
        let (_, t_prev, v_prev) = w[0];
        let (line, t, v) = w[1];
        let secs = (t - t_prev).num_seconds();
        if secs <= 0 || secs % step != 0 {
            return Err(Error::NonUniformSpacing {
                line,
                reason: format!("timestamp {} breaks the {}-minute grid", format_timestamp(t), step / 60),
            });
        }
        let gap = (secs / step) as usize;
        if gap - 1 > schema.max_gap_fill {
            return Err(Error::NonUniformSpacing {
                line,
                reason: format!(
                    "{} missing intervals exceed the fill limit of {}",
                    gap - 1,
                    schema.max_gap_fill
                ),
            });
        }
        for k in 1..gap {
            let frac = k as f64 / gap as f64;
            values.push(v_prev + frac * (v - v_prev));
        }
        values.push(v);
    }

    EnergySeries::new(rows[0].1, (step / 60) as u32, values, meter_id)
}

/// Writes `series` in the schema [`ingest_csv`] reads.
pub fn write_csv<W: Write>(series: &EnergySeries, schema: &CsvSchema, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([schema.timestamp_column.as_str(), schema.energy_column.as_str()])?;
    for (i, v) in series.values().iter().enumerate() {
        w.write_record([format_timestamp(series.timestamp(i)), format!("{v}")])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// How a series is differenced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMode {
    /// Lag-1 differencing applied `d` times.
    #[default]
    IteratedLag1,
    /// A single lag-`d` difference, `w_t = x_t - x_{t-d}`.
    SingleLagD,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferencedSeries {
    pub source_length: usize,
    pub d: usize,
    pub mode: DiffMode,
    pub values: Vec<f64>,
}

pub fn difference(values: &[f64], d: usize, mode: DiffMode) -> Result<DifferencedSeries> {
    if values.len() <= d {
        return Err(Error::InsufficientLength { len: values.len(), d });
    }
    let out = match mode {
        _ if d == 0 => values.to_vec(),
        DiffMode::IteratedLag1 => {
            let mut w = values.to_vec();
            for _ in 0..d {
                w = w.windows(2).map(|p| p[1] - p[0]).collect();
            }
            w
        }
        DiffMode::SingleLagD => (d..values.len()).map(|t| values[t] - values[t - d]).collect(),
    };
    Ok(DifferencedSeries {
        source_length: values.len(),
        d,
        mode,
        values: out,
    })
}

/// Inverts [`difference`] given the first `d` source values.
pub fn integrate(diff: &DifferencedSeries, seed_values: &[f64]) -> Result<Vec<f64>> {
    let d = diff.d;
    if seed_values.len() != d {
        return Err(Error::SeedLengthMismatch {
            expected: d,
            got: seed_values.len(),
        });
    }
    if d == 0 {
        return Ok(diff.values.clone());
    }
    match diff.mode {
        DiffMode::IteratedLag1 => {
            // Level k series starts with the k-th difference of the seed.
            let mut heads = Vec::with_capacity(d);
            let mut cur = seed_values.to_vec();
            for _ in 0..d {
                heads.push(cur[0]);
                cur = cur.windows(2).map(|p| p[1] - p[0]).collect();
            }
            let mut level = diff.values.clone();
            for k in (0..d).rev() {
                let mut next = Vec::with_capacity(level.len() + 1);
                let mut acc = heads[k];
                next.push(acc);
                for w in &level {
                    acc += w;
                    next.push(acc);
                }
                level = next;
            }
            Ok(level)
        }
        DiffMode::SingleLagD => {
            let mut out = seed_values.to_vec();
            out.reserve(diff.values.len());
            for (i, w) in diff.values.iter().enumerate() {
                out.push(w + out[i]);
            }
            Ok(out)
        }
    }
}

/// Maps differenced-scale forecasts back to levels, continuing after `tail`.
///
/// `tail` must hold at least `d` trailing source values.
pub fn integrate_forward(tail: &[f64], future: &[f64], d: usize, mode: DiffMode) -> Vec<f64> {
    if d == 0 {
        return future.to_vec();
    }
    assert!(tail.len() >= d, "integrate_forward needs {d} trailing values");
    match mode {
        DiffMode::IteratedLag1 => {
            let mut last = vec![0.0; d];
            recompute_last_diffs(tail, d, &mut last);
            let mut out = Vec::with_capacity(future.len());
            for w in future {
                let mut v = *w;
                for k in (0..d).rev() {
                    v += last[k];
                    last[k] = v;
                }
                out.push(v);
            }
            out
        }
        DiffMode::SingleLagD => {
            let mut buf: Vec<f64> = tail[tail.len() - d..].to_vec();
            let mut out = Vec::with_capacity(future.len());
            for (j, w) in future.iter().enumerate() {
                let v = w + buf[j];
                buf.push(v);
                out.push(v);
            }
            out
        }
    }
}

// last[k] = final element of the k-th difference of `tail`; the k-th
// difference of the last d values has d - k >= 1 elements.
fn recompute_last_diffs(tail: &[f64], d: usize, last: &mut [f64]) {
    let mut cur = tail[tail.len() - d..].to_vec();
    for slot in last.iter_mut() {
        *slot = *cur.last().expect("tail holds d values");
        cur = cur.windows(2).map(|p| p[1] - p[0]).collect();
    }
}

/// Daily maximum interval-average power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakSeries {
    pub dates: Vec<NaiveDate>,
    pub peaks: Vec<f64>,
}

impl PeakSeries {
    pub fn new(dates: Vec<NaiveDate>, peaks: Vec<f64>) -> Result<Self> {
        if dates.len() != peaks.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: peaks.len(),
            });
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries("peak dates must be strictly increasing".into()));
        }
        if peaks.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidSeries("peaks must be finite and non-negative".into()));
        }
        Ok(Self { dates, peaks })
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    /// Entries dated strictly before `date`.
    pub fn before(&self, date: NaiveDate) -> PeakSeries {
        let n = self.dates.iter().take_while(|d| **d < date).count();
        PeakSeries {
            dates: self.dates[..n].to_vec(),
            peaks: self.peaks[..n].to_vec(),
        }
    }
}

/// Peak interval-average power (kW) for every complete UTC calendar day.
pub fn daily_peaks(series: &EnergySeries) -> Result<PeakSeries> {
    let per_day = (24 * 60 / series.resolution_minutes()) as usize;
    let dh = series.delta_hours();
    let mut days: BTreeMap<NaiveDate, (usize, f64)> = BTreeMap::new();
    for (i, v) in series.values().iter().enumerate() {
        let entry = days.entry(series.timestamp(i).date_naive()).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 = entry.1.max(v / dh);
    }
    let (dates, peaks): (Vec<_>, Vec<_>) = days
        .into_iter()
        .filter(|(_, (n, _))| *n == per_day)
        .map(|(d, (_, p))| (d, p))
        .unzip();
    if dates.is_empty() {
        return Err(Error::NoCompleteDay);
    }
    PeakSeries::new(dates, peaks)
}
