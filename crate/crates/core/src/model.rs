//! Domain types shared across the pipeline and validation of raw segment records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::Rejection;

/// Meters per statute mile.
pub const METERS_PER_MILE: f64 = 1609.344;

/// Days per year used in exposure (AADT × 365 × years × length).
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Four-tier road classification. `Type4` (controlled-access highway) is the
/// reference level in regression models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoadType {
    /// Local roads and rural routes.
    Type1,
    /// Arterials.
    Type2,
    /// Non-controlled access highways.
    Type3,
    /// Controlled-access highways.
    Type4,
}

impl RoadType {
    pub const ALL: [RoadType; 4] = [RoadType::Type1, RoadType::Type2, RoadType::Type3, RoadType::Type4];

    pub fn code(self) -> u8 {
        match self {
            RoadType::Type1 => 1,
            RoadType::Type2 => 2,
            RoadType::Type3 => 3,
            RoadType::Type4 => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(RoadType::Type1),
            2 => Some(RoadType::Type2),
            3 => Some(RoadType::Type3),
            4 => Some(RoadType::Type4),
            _ => None,
        }
    }

    /// Zero-based position, used to index per-type arrays.
    pub fn index(self) -> usize {
        self.code() as usize - 1
    }

    pub fn label(self) -> &'static str {
        match self {
            RoadType::Type1 => "local",
            RoadType::Type2 => "arterial",
            RoadType::Type3 => "non-controlled highway",
            RoadType::Type4 => "controlled-access highway",
        }
    }
}

impl fmt::Display for RoadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Static attributes of one road segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment {
    pub segment_id: String,
    pub length_miles: f64,
    /// Annual average daily traffic, vehicles/day.
    pub aadt: f64,
    pub road_type: RoadType,
    pub num_lanes: u32,
    pub has_ramp: bool,
    pub lane_changes: u32,
    pub cum_turn_angle_deg: f64,
    /// Crash observation window, years.
    pub observed_years: f64,
}

/// Column names of the segments file, in canonical order.
pub const SEGMENT_FIELDS: [&str; 9] = [
    "segment_id",
    "length_miles",
    "aadt",
    "road_type",
    "num_lanes",
    "has_ramp",
    "lane_changes",
    "cum_turn_angle_deg",
    "observed_years",
];

/// An unvalidated record: field name to raw text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawRecord(BTreeMap<String, String>);

impl RawRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.0.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.insert(key, value);
        self
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for RawRecord {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        RawRecord(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

fn field<'a>(raw: &'a RawRecord, name: &str) -> Result<&'a str, Rejection> {
    match raw.get(name).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Rejection::new(format!("missing field {name}"))),
    }
}

fn number<T: FromStr>(raw: &RawRecord, name: &str) -> Result<T, Rejection> {
    let text = field(raw, name)?;
    text.parse::<T>()
        .map_err(|_| Rejection::new(format!("{name} is not a valid number: {text:?}")))
}

fn finite(raw: &RawRecord, name: &str) -> Result<f64, Rejection> {
    let v: f64 = number(raw, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Rejection::new(format!("{name} must be finite")))
    }
}

fn flag(raw: &RawRecord, name: &str) -> Result<bool, Rejection> {
    match field(raw, name)?.to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Rejection::new(format!("{name} must be 0 or 1, got {other:?}"))),
    }
}

/// Validate a raw segment record, returning the first violated constraint on failure.
pub fn validate_segment(raw: &RawRecord) -> Result<RoadSegment, Rejection> {
    let segment_id = field(raw, "segment_id")?.to_string();

    let length_miles = finite(raw, "length_miles")?;
    if length_miles <= 0.0 {
        return Err(Rejection::new("length must be > 0"));
    }
    let aadt = finite(raw, "aadt")?;
    if aadt < 0.0 {
        return Err(Rejection::new("aadt must be >= 0"));
    }
    let code: i64 = number(raw, "road_type")
        .map_err(|_| Rejection::new("road_type must be 1..4"))?;
    let road_type = u8::try_from(code)
        .ok()
        .and_then(RoadType::from_code)
        .ok_or_else(|| Rejection::new("road_type must be 1..4"))?;
    let num_lanes: u32 = number(raw, "num_lanes")?;
    if num_lanes < 1 {
        return Err(Rejection::new("num_lanes must be >= 1"));
    }
    let has_ramp = flag(raw, "has_ramp")?;
    let lane_changes: u32 = number(raw, "lane_changes")?;
    let cum_turn_angle_deg = finite(raw, "cum_turn_angle_deg")?;
    if cum_turn_angle_deg < 0.0 {
        return Err(Rejection::new("cum_turn_angle_deg must be >= 0"));
    }
    let observed_years = finite(raw, "observed_years")?;
    if observed_years <= 0.0 {
        return Err(Rejection::new("observed_years must be > 0"));
    }

    Ok(RoadSegment {
        segment_id,
        length_miles,
        aadt,
        road_type,
        num_lanes,
        has_ramp,
        lane_changes,
        cum_turn_angle_deg,
        observed_years,
    })
}

impl RoadSegment {
    /// Serialize into the raw form accepted by [`validate_segment`].
    pub fn to_record(&self) -> RawRecord {
        self.csv_fields()
            .into_iter()
            .zip(SEGMENT_FIELDS)
            .map(|(v, k)| (k, v))
            .collect()
    }

    /// Field values in [`SEGMENT_FIELDS`] order.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.segment_id.clone(),
            self.length_miles.to_string(),
            self.aadt.to_string(),
            self.road_type.to_string(),
            self.num_lanes.to_string(),
            u8::from(self.has_ramp).to_string(),
            self.lane_changes.to_string(),
            self.cum_turn_angle_deg.to_string(),
            self.observed_years.to_string(),
        ]
    }
}

/// One police-reported crash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashRecord {
    pub segment_id: String,
    pub date: chrono::NaiveDate,
}

/// A single speed observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSample {
    pub timestamp_s: f64,
    pub speed_mps: f64,
    pub segment_id: String,
}

/// One vehicle trip: time-ordered speed samples tagged with segment ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TripTrace {
    pub trip_id: String,
    pub samples: Vec<SpeedSample>,
}

impl TripTrace {
    pub fn new(trip_id: impl Into<String>, samples: Vec<SpeedSample>) -> Self {
        Self {
            trip_id: trip_id.into(),
            samples,
        }
    }

    /// Build a trace on a single segment from `(t, v)` pairs.
    pub fn on_segment(trip_id: &str, segment_id: &str, points: &[(f64, f64)]) -> Self {
        let samples = points
            .iter()
            .map(|&(t, v)| SpeedSample {
                timestamp_s: t,
                speed_mps: v,
                segment_id: segment_id.to_string(),
            })
            .collect();
        Self::new(trip_id, samples)
    }
}

/// A detected hard-braking event.
#[derive(Debug, Clone, PartialEq)]
pub struct HbeEvent {
    pub trip_id: String,
    pub segment_id: String,
    pub onset_time_s: f64,
    /// Peak deceleration magnitude, m/s² (positive).
    pub peak_decel_mps2: f64,
}

/// Per-segment hard-braking summary: event count and monitored distance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HbeSummary {
    pub hbe_count: u64,
    pub hbe_distance_miles: f64,
}

/// Joined per-segment record; the unit of observation for modeling.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub segment_id: String,
    pub exposure_mvmt: f64,
    pub crash_count: u64,
    /// Crashes per million vehicle-miles.
    pub crash_rate: f64,
    pub hbe_count: u64,
    pub hbe_distance_miles: f64,
    /// Events per vehicle-mile.
    pub hbe_rate: f64,
    pub road_type: RoadType,
    pub num_lanes: u32,
    pub has_ramp: bool,
    pub lane_changes: u32,
    pub cum_turn_angle_deg: f64,
    /// Not part of the table dump; known only when built from a segments file.
    pub length_miles: Option<f64>,
}
