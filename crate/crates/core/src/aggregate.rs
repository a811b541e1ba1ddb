//! Joins segments, crash counts and hard-braking summaries into the modeling table.

use std::collections::BTreeMap;

use crate::model::{AnalysisRow, HbeSummary, RoadSegment, DAYS_PER_YEAR};

/// Exposure in million vehicle-miles: length × AADT × 365 × years / 10⁶.
pub fn compute_exposure(seg: &RoadSegment) -> f64 {
    seg.length_miles * seg.aadt * DAYS_PER_YEAR * seg.observed_years / 1e6
}

/// Crashes per million vehicle-miles. `None` when exposure is not positive.
pub fn crash_rate(crash_count: u64, exposure_mvmt: f64) -> Option<f64> {
    (exposure_mvmt > 0.0).then(|| crash_count as f64 / exposure_mvmt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinOptions {
    /// Treat segments with hard-braking data but no crash rows as zero-crash segments.
    pub zero_fill_crashes: bool,
}

impl Default for JoinOptions {
    fn default() -> Self {
        Self {
            zero_fill_crashes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exclusion {
    NonPositiveExposure,
    NoTelemetry,
}

impl std::fmt::Display for Exclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exclusion::NonPositiveExposure => f.write_str("exposure <= 0"),
            Exclusion::NoTelemetry => f.write_str("no monitored distance"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JoinReport {
    /// Segments that entered the join but were dropped, with reasons.
    pub exclusions: Vec<(String, Exclusion)>,
    /// Crash or HBE keys that match no segment.
    pub unknown_segments: Vec<String>,
}

/// Build the analysis table, sorted by segment id.
///
/// A segment enters the join when it has crash rows (or, with
/// `zero_fill_crashes`, hard-braking data). It is then excluded when exposure
/// or monitored distance is not positive.
pub fn build_analysis_table(
    segments: &[RoadSegment],
    crash_counts: &BTreeMap<String, u64>,
    hbe: &BTreeMap<String, HbeSummary>,
    opts: JoinOptions,
) -> (Vec<AnalysisRow>, JoinReport) {
    let mut report = JoinReport::default();
    let mut by_id: BTreeMap<&str, &RoadSegment> = BTreeMap::new();
    for s in segments {
        by_id.insert(&s.segment_id, s);
    }
    for key in crash_counts.keys().chain(hbe.keys()) {
        if !by_id.contains_key(key.as_str()) {
            report.unknown_segments.push(key.clone());
        }
    }
    report.unknown_segments.sort();
    report.unknown_segments.dedup();

    let mut rows = Vec::new();
    for (id, seg) in by_id {
        let crash_count = match crash_counts.get(id) {
            Some(&c) => c,
            None if opts.zero_fill_crashes && hbe.contains_key(id) => 0,
            None => continue,
        };
        let exposure_mvmt = compute_exposure(seg);
        let Some(rate) = crash_rate(crash_count, exposure_mvmt) else {
            report.exclusions.push((id.to_string(), Exclusion::NonPositiveExposure));
            continue;
        };
        let summary = hbe.get(id).copied().unwrap_or_default();
        if !(summary.hbe_distance_miles > 0.0) {
            report.exclusions.push((id.to_string(), Exclusion::NoTelemetry));
            continue;
        }
        rows.push(AnalysisRow {
            segment_id: id.to_string(),
            exposure_mvmt,
            crash_count,
            crash_rate: rate,
            hbe_count: summary.hbe_count,
            hbe_distance_miles: summary.hbe_distance_miles,
            hbe_rate: summary.hbe_count as f64 / summary.hbe_distance_miles,
            road_type: seg.road_type,
            num_lanes: seg.num_lanes,
            has_ramp: seg.has_ramp,
            lane_changes: seg.lane_changes,
            cum_turn_angle_deg: seg.cum_turn_angle_deg,
            length_miles: Some(seg.length_miles),
        });
    }
    (rows, report)
}
