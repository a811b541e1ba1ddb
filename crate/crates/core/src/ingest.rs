//! Readers for the three input files: segments, crashes and telemetry.
//!
//! All inputs are UTF-8 CSV with a mandatory header row. Column order is free
//! but names are fixed; unknown or missing columns abort the read. Lines
//! starting with `#` are comments. A completely empty file is an empty table.
//! Row-level problems never abort: they are recorded in the [`IngestReport`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{IngestError, Rejection};
use crate::model::{validate_segment, RawRecord, RoadSegment, SpeedSample, TripTrace, SEGMENT_FIELDS};

pub const CRASH_FIELDS: [&str; 2] = ["segment_id", "date"];
pub const TELEMETRY_FIELDS: [&str; 4] = ["trip_id", "timestamp_s", "speed_mps", "segment_id"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    /// `(line number, reason)`; line numbers are 1-based file lines.
    pub rejections: Vec<(u64, String)>,
}

impl IngestReport {
    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rejections.push((line, reason.into()));
    }

    pub fn is_consistent(&self) -> bool {
        self.rows_read == self.rows_accepted + self.rejections.len()
    }
}

/// Inclusive calendar-date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, IngestError> {
        if start > end {
            return Err(IngestError::Window(format!("start {start} is after end {end}")));
        }
        Ok(Self { start, end })
    }

    /// `years` whole calendar years starting at `start`.
    pub fn years_from(start: NaiveDate, years: u32) -> Result<Self, IngestError> {
        let end = start
            .checked_add_months(chrono::Months::new(12 * years))
            .and_then(|d| d.pred_opt())
            .ok_or_else(|| IngestError::Window("window end out of range".into()))?;
        Self::new(start, end)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn num_days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

pub fn parse_date(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").ok()
}

/// CSV reader positioned after a validated header.
pub(crate) struct Table<R: Read> {
    reader: csv::Reader<R>,
    columns: Vec<String>,
    label: String,
}

pub(crate) fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source)
}

impl<R: Read> Table<R> {
    /// Returns `None` for an input with no header at all (empty file).
    pub(crate) fn open(
        source: R,
        label: &str,
        required: &[&str],
        optional: &[&str],
    ) -> Result<Option<Self>, IngestError> {
        let mut reader = csv_reader(source);
        let header_err = |reason: String| IngestError::Header {
            path: label.into(),
            reason,
        };
        let headers = reader.headers().map_err(|e| IngestError::Csv {
            path: label.into(),
            source: e,
        })?;
        if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
            return Ok(None);
        }
        let columns: Vec<String> = headers.iter().map(str::to_string).collect();
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(header_err(format!("duplicate column {c:?}")));
            }
            if !required.contains(&c.as_str()) && !optional.contains(&c.as_str()) {
                return Err(header_err(format!("unknown column {c:?}")));
            }
        }
        for r in required {
            if !seen.contains(r) {
                return Err(header_err(format!("missing column {r:?}")));
            }
        }
        Ok(Some(Self {
            reader,
            columns,
            label: label.to_string(),
        }))
    }

    /// Calls `f(line, record)` for every data row.
    pub(crate) fn for_each(mut self, mut f: impl FnMut(u64, Result<RawRecord, Rejection>)) -> Result<(), IngestError> {
        for rec in self.reader.records() {
            let rec = rec.map_err(|e| IngestError::Csv {
                path: self.label.clone().into(),
                source: e,
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != self.columns.len() {
                f(
                    line,
                    Err(Rejection::new(format!(
                        "expected {} fields, found {}",
                        self.columns.len(),
                        rec.len()
                    ))),
                );
                continue;
            }
            let raw: RawRecord = self.columns.iter().map(String::as_str).zip(rec.iter()).collect();
            f(line, Ok(raw));
        }
        Ok(())
    }
}

pub(crate) fn open_file(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_segments(path: &Path) -> Result<(Vec<RoadSegment>, IngestReport), IngestError> {
    read_segments(open_file(path)?, &path.display().to_string())
}

pub fn read_segments<R: Read>(source: R, label: &str) -> Result<(Vec<RoadSegment>, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mut out = Vec::new();
    let Some(table) = Table::open(source, label, &SEGMENT_FIELDS, &[])? else {
        return Ok((out, report));
    };
    let mut ids = HashSet::new();
    table.for_each(|line, raw| {
        report.rows_read += 1;
        match raw.and_then(|r| validate_segment(&r)) {
            Ok(seg) if !ids.insert(seg.segment_id.clone()) => report.reject(line, "duplicate segment_id"),
            Ok(seg) => {
                report.rows_accepted += 1;
                out.push(seg);
            }
            Err(e) => report.reject(line, e.reason()),
        }
    })?;
    Ok((out, report))
}

pub fn parse_crashes(path: &Path, window: DateWindow) -> Result<(BTreeMap<String, u64>, IngestReport), IngestError> {
    read_crashes(open_file(path)?, &path.display().to_string(), window)
}

pub fn read_crashes<R: Read>(
    source: R,
    label: &str,
    window: DateWindow,
) -> Result<(BTreeMap<String, u64>, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mut counts = BTreeMap::new();
    let Some(table) = Table::open(source, label, &CRASH_FIELDS, &[])? else {
        return Ok((counts, report));
    };
    table.for_each(|line, raw| {
        report.rows_read += 1;
        let parsed = raw.and_then(|r| {
            let id = r.get("segment_id").unwrap_or_default();
            if id.is_empty() {
                return Err(Rejection::new("missing field segment_id"));
            }
            let text = r.get("date").unwrap_or_default();
            let date = parse_date(text).ok_or_else(|| Rejection::new(format!("unparseable date {text:?}")))?;
            if !window.contains(date) {
                return Err(Rejection::new("outside window"));
            }
            Ok(id.to_string())
        });
        match parsed {
            Ok(id) => {
                report.rows_accepted += 1;
                *counts.entry(id).or_insert(0) += 1;
            }
            Err(e) => report.reject(line, e.reason()),
        }
    })?;
    Ok((counts, report))
}

pub fn parse_telemetry(path: &Path) -> Result<(Vec<TripTrace>, IngestReport), IngestError> {
    read_telemetry(open_file(path)?, &path.display().to_string())
}

/// Rows are grouped by `trip_id` in order of first appearance. Within a trip,
/// rows must appear with strictly increasing timestamps; a regression rejects
/// every row of that trip.
pub fn read_telemetry<R: Read>(source: R, label: &str) -> Result<(Vec<TripTrace>, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let Some(table) = Table::open(source, label, &TELEMETRY_FIELDS, &[])? else {
        return Ok((Vec::new(), report));
    };

    struct Pending {
        trace: TripTrace,
        lines: Vec<u64>,
        broken: Option<String>,
    }
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut trips: Vec<Pending> = Vec::new();

    table.for_each(|line, raw| {
        report.rows_read += 1;
        let parsed = raw.and_then(|r| {
            let trip = r.get("trip_id").unwrap_or_default().to_string();
            let seg = r.get("segment_id").unwrap_or_default().to_string();
            if trip.is_empty() {
                return Err(Rejection::new("missing field trip_id"));
            }
            if seg.is_empty() {
                return Err(Rejection::new("missing field segment_id"));
            }
            let num = |k: &str| -> Result<f64, Rejection> {
                let t = r.get(k).unwrap_or_default();
                match t.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Rejection::new(format!("{k} is not a valid number: {t:?}"))),
                }
            };
            let t = num("timestamp_s")?;
            let v = num("speed_mps")?;
            if v < 0.0 {
                return Err(Rejection::new("negative speed"));
            }
            Ok((trip, SpeedSample { timestamp_s: t, speed_mps: v, segment_id: seg }))
        });
        let (trip, sample) = match parsed {
            Ok(p) => p,
            Err(e) => {
                report.reject(line, e.reason());
                return;
            }
        };
        let slot = *index.entry(trip.clone()).or_insert_with(|| {
            trips.push(Pending {
                trace: TripTrace::new(trip.clone(), Vec::new()),
                lines: Vec::new(),
                broken: None,
            });
            trips.len() - 1
        });
        let pending = &mut trips[slot];
        if let Some(last) = pending.trace.samples.last() {
            if sample.timestamp_s <= last.timestamp_s && pending.broken.is_none() {
                pending.broken = Some(format!("trip {trip}: non-increasing timestamp"));
            }
        }
        pending.trace.samples.push(sample);
        pending.lines.push(line);
    })?;

    let mut out = Vec::with_capacity(trips.len());
    for p in trips {
        match p.broken {
            Some(reason) => {
                for line in p.lines {
                    report.reject(line, reason.clone());
                }
            }
            None => {
                report.rows_accepted += p.lines.len();
                out.push(p.trace);
            }
        }
    }
    report.rejections.sort_by_key(|r| r.0);
    Ok((out, report))
}
