//! Hard-braking detection from speed traces.
//!
//! Acceleration is the first difference of speed between consecutive samples.
//! Consecutive samples further apart than `max_sample_gap` split a trace into
//! independent runs; nothing (acceleration, events, distance) spans a split.

use std::collections::BTreeMap;

use crate::model::{HbeEvent, HbeSummary, TripTrace, METERS_PER_MILE};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Deceleration magnitude that opens an event, m/s².
    pub decel_threshold: f64,
    /// Events separated by less than this many seconds are merged.
    pub min_event_gap: f64,
    /// Larger sample spacing (seconds) splits the trace.
    pub max_sample_gap: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            decel_threshold: 3.0,
            min_event_gap: 2.0,
            max_sample_gap: 5.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.decel_threshold > 0.0 && self.decel_threshold.is_finite()) {
            return Err("decel_threshold must be > 0".into());
        }
        if !(self.min_event_gap >= 0.0 && self.min_event_gap.is_finite()) {
            return Err("min_event_gap must be >= 0".into());
        }
        if !(self.max_sample_gap > 0.0 && self.max_sample_gap.is_finite()) {
            return Err("max_sample_gap must be > 0".into());
        }
        Ok(())
    }
}

/// Acceleration between two consecutive samples of the same run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    /// Index of the first sample.
    pub start: usize,
    pub run: usize,
    pub t0: f64,
    pub t1: f64,
    pub accel: f64,
}

impl Interval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t0 + self.t1)
    }
}

/// Intervals of a trace, in time order, tagged with their run number.
pub fn intervals(trace: &TripTrace, max_sample_gap: f64) -> Vec<Interval> {
    let mut run = 0;
    let mut out = Vec::with_capacity(trace.samples.len().saturating_sub(1));
    for (i, pair) in trace.samples.windows(2).enumerate() {
        let dt = pair[1].timestamp_s - pair[0].timestamp_s;
        if dt > max_sample_gap {
            run += 1;
            continue;
        }
        out.push(Interval {
            start: i,
            run,
            t0: pair[0].timestamp_s,
            t1: pair[1].timestamp_s,
            accel: (pair[1].speed_mps - pair[0].speed_mps) / dt,
        });
    }
    out
}

/// `(midpoint time, acceleration m/s²)` for every interval within a run.
pub fn derive_acceleration(trace: &TripTrace, max_sample_gap: f64) -> Vec<(f64, f64)> {
    intervals(trace, max_sample_gap)
        .iter()
        .map(|iv| (iv.midpoint(), iv.accel))
        .collect()
}

struct OpenEvent {
    onset: usize,
    run: usize,
    end_t: f64,
    peak: f64,
}

pub fn detect_hbes(trace: &TripTrace, cfg: &DetectorConfig) -> Vec<HbeEvent> {
    let mut done: Vec<OpenEvent> = Vec::new();
    let mut open: Option<OpenEvent> = None;

    for iv in intervals(trace, cfg.max_sample_gap) {
        if open.as_ref().is_some_and(|e| e.run != iv.run) {
            done.extend(open.take());
        }
        let decel = -iv.accel;
        if decel >= cfg.decel_threshold {
            match open.as_mut() {
                Some(e) => {
                    e.end_t = iv.t1;
                    e.peak = e.peak.max(decel);
                }
                None => {
                    let merge = done
                        .last()
                        .is_some_and(|prev| prev.run == iv.run && iv.t0 - prev.end_t < cfg.min_event_gap);
                    let mut e = if merge {
                        done.pop().unwrap()
                    } else {
                        OpenEvent {
                            onset: iv.start,
                            run: iv.run,
                            end_t: iv.t1,
                            peak: decel,
                        }
                    };
                    e.end_t = iv.t1;
                    e.peak = e.peak.max(decel);
                    open = Some(e);
                }
            }
        } else if let Some(e) = open.take() {
            done.push(e);
        }
    }
    done.extend(open);

    done.into_iter()
        .map(|e| {
            let s = &trace.samples[e.onset];
            HbeEvent {
                trip_id: trace.trip_id.clone(),
                segment_id: s.segment_id.clone(),
                onset_time_s: s.timestamp_s,
                peak_decel_mps2: e.peak,
            }
        })
        .collect()
}

/// Distance driven, in miles, by trapezoidal integration within runs.
pub fn monitored_distance(trace: &TripTrace, max_sample_gap: f64) -> f64 {
    intervals(trace, max_sample_gap)
        .iter()
        .map(|iv| interval_meters(trace, iv))
        .sum::<f64>()
        / METERS_PER_MILE
}

fn interval_meters(trace: &TripTrace, iv: &Interval) -> f64 {
    let a = &trace.samples[iv.start];
    let b = &trace.samples[iv.start + 1];
    0.5 * (a.speed_mps + b.speed_mps) * (iv.t1 - iv.t0)
}

/// Events and per-segment monitored meters for one trace.
pub fn trace_summary(trace: &TripTrace, cfg: &DetectorConfig) -> (Vec<HbeEvent>, BTreeMap<String, f64>) {
    let events = detect_hbes(trace, cfg);
    let mut meters: BTreeMap<String, f64> = BTreeMap::new();
    for iv in intervals(trace, cfg.max_sample_gap) {
        let seg = &trace.samples[iv.start].segment_id;
        *meters.entry(seg.clone()).or_insert(0.0) += interval_meters(trace, &iv);
    }
    (events, meters)
}

/// Detection over many traces. Returns all events (trace order) and
/// per-segment `(count, miles)` keyed by segment id.
pub fn detect_all(traces: &[TripTrace], cfg: &DetectorConfig) -> (Vec<HbeEvent>, BTreeMap<String, HbeSummary>) {
    let per_trace = par::map_slice(traces, |t| trace_summary(t, cfg));
    let mut events = Vec::new();
    let mut meters: BTreeMap<String, par::KahanSum> = BTreeMap::new();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for (evs, m) in per_trace {
        for (seg, d) in m {
            meters.entry(seg).or_default().add(d);
        }
        for e in &evs {
            *counts.entry(e.segment_id.clone()).or_insert(0) += 1;
        }
        events.extend(evs);
    }
    let mut out: BTreeMap<String, HbeSummary> = meters
        .into_iter()
        .map(|(seg, m)| {
            (
                seg,
                HbeSummary {
                    hbe_count: 0,
                    hbe_distance_miles: m.value() / METERS_PER_MILE,
                },
            )
        })
        .collect();
    for (seg, c) in counts {
        out.entry(seg).or_default().hbe_count = c;
    }
    (events, out)
}

pub fn aggregate_hbes(traces: &[TripTrace], cfg: &DetectorConfig) -> BTreeMap<String, HbeSummary> {
    detect_all(traces, cfg).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpeedSample;
    use proptest::prelude::*;

    fn cfg(threshold: f64) -> DetectorConfig {
        DetectorConfig {
            decel_threshold: threshold,
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn first_difference_at_midpoint() {
        let t = TripTrace::on_segment("t", "s", &[(0.0, 20.0), (1.0, 17.0)]);
        assert_eq!(derive_acceleration(&t, 5.0), vec![(0.5, -3.0)]);
    }

    #[test]
    fn constant_speed_has_zero_acceleration() {
        let pts: Vec<_> = (0..10).map(|i| (i as f64, 15.0)).collect();
        let t = TripTrace::on_segment("t", "s", &pts);
        assert!(derive_acceleration(&t, 5.0).iter().all(|&(_, a)| a == 0.0));
    }

    #[test]
    fn gap_splits_runs() {
        let t = TripTrace::on_segment("t", "s", &[(0.0, 10.0), (10.0, 0.0)]);
        assert!(derive_acceleration(&t, 5.0).is_empty());
        assert_eq!(monitored_distance(&t, 5.0), 0.0);
        let one = TripTrace::on_segment("t", "s", &[(0.0, 10.0)]);
        assert!(derive_acceleration(&one, 5.0).is_empty());
    }

    #[test]
    fn linear_brake_is_one_event() {
        let t = TripTrace::on_segment("t", "s", &[(0.0, 20.0), (1.0, 15.0), (2.0, 10.0), (3.0, 5.0)]);
        let ev = detect_hbes(&t, &cfg(3.0));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].peak_decel_mps2, 5.0);
        assert_eq!(ev[0].onset_time_s, 0.0);
    }

    #[test]
    fn cruise_has_no_events() {
        let pts: Vec<_> = (0..=60).map(|i| (i as f64, 15.0)).collect();
        assert!(detect_hbes(&TripTrace::on_segment("t", "s", &pts), &cfg(3.0)).is_empty());
    }

    fn two_brakes(separation: usize) -> TripTrace {
        // cruise, brake -4 m/s² for 2 s, hold, brake again.
        let mut v = vec![20.0, 20.0, 16.0, 12.0];
        v.extend(std::iter::repeat(12.0).take(separation));
        v.extend([8.0, 4.0, 4.0]);
        let pts: Vec<_> = v.into_iter().enumerate().map(|(i, v)| (i as f64, v)).collect();
        TripTrace::on_segment("t", "s", &pts)
    }

    #[test]
    fn episodes_merge_only_when_close() {
        // First event ends at t=3. With `separation` extra samples at 12 m/s,
        // the second starts at t = 3 + separation.
        assert_eq!(detect_hbes(&two_brakes(10), &cfg(3.0)).len(), 2);
        assert_eq!(detect_hbes(&two_brakes(1), &cfg(3.0)).len(), 1);
        assert_eq!(detect_hbes(&two_brakes(2), &cfg(3.0)).len(), 2);
    }

    #[test]
    fn distance_rectangle_and_ramp() {
        let t = TripTrace::on_segment("t", "s", &[(0.0, 10.0), (160.9344, 10.0)]);
        assert!((monitored_distance(&t, 500.0) - 1.0).abs() < 1e-12);
        let pts: Vec<_> = (0..=100).map(|i| (i as f64, i as f64 * 0.1)).collect();
        let ramp = TripTrace::on_segment("t", "s", &pts);
        // exact for a linear profile: 0.5 * 10 m/s * 100 s
        assert!((monitored_distance(&ramp, 5.0) - 500.0 / METERS_PER_MILE).abs() < 1e-12);
        assert!((monitored_distance(&ramp, 5.0) - 0.31069).abs() < 1e-5);
    }

    #[test]
    fn single_segment_aggregation() {
        // 3 miles at 20 m/s, two hard brakes
        let total = 3.0 * METERS_PER_MILE;
        let mut pts = vec![(0.0, 20.0)];
        let mut t = 0.0;
        // brake at t=10 and t=50 by dipping speed for one second
        for k in 1..=240 {
            t = k as f64;
            let v = if k == 10 || k == 50 { 14.0 } else { 20.0 };
            pts.push((t, v));
        }
        let mut trace = TripTrace::on_segment("t", "s1", &pts);
        // stretch last sample so total distance is exactly 3 miles
        let so_far = monitored_distance(&trace, 1e9) * METERS_PER_MILE;
        let extra = (total - so_far) / 20.0;
        trace.samples.push(SpeedSample {
            timestamp_s: t + extra,
            speed_mps: 20.0,
            segment_id: "s1".into(),
        });
        let agg = aggregate_hbes(&[trace], &DetectorConfig { max_sample_gap: 1e9, ..cfg(3.0) });
        assert_eq!(agg.len(), 1);
        assert_eq!(agg["s1"].hbe_count, 2);
        assert!((agg["s1"].hbe_distance_miles - 3.0).abs() < 1e-9);
        assert!(aggregate_hbes(&[], &cfg(3.0)).is_empty());
    }

    #[test]
    fn event_spanning_segments_counts_on_onset_segment() {
        let mut trace = TripTrace::on_segment("t", "s1", &[(0.0, 20.0), (1.0, 20.0), (2.0, 16.0)]);
        for (t, v) in [(3.0, 12.0), (4.0, 8.0), (5.0, 8.0)] {
            trace.samples.push(SpeedSample {
                timestamp_s: t,
                speed_mps: v,
                segment_id: "s2".into(),
            });
        }
        let agg = aggregate_hbes(&[trace], &cfg(3.0));
        assert_eq!(agg["s1"].hbe_count, 1);
        assert_eq!(agg["s2"].hbe_count, 0);
        // intervals starting on s1: (0,1) (1,2) (2,3): 20 + 18 + 14 m
        assert!((agg["s1"].hbe_distance_miles * METERS_PER_MILE - 52.0).abs() < 1e-9);
        assert!((agg["s2"].hbe_distance_miles * METERS_PER_MILE - 18.0).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        assert!(cfg(0.0).validate().is_err());
        assert!(DetectorConfig { min_event_gap: -1.0, ..cfg(3.0) }.validate().is_err());
        assert!(DetectorConfig { max_sample_gap: 0.0, ..cfg(3.0) }.validate().is_err());
    }

    fn arb_trace() -> impl Strategy<Value = TripTrace> {
        prop::collection::vec((0.05f64..7.0, -8.0f64..6.0), 1..300).prop_map(|steps| {
            let mut t = 0.0;
            let mut v: f64 = 20.0;
            let mut pts = Vec::with_capacity(steps.len());
            for (i, (dt, a)) in steps.into_iter().enumerate() {
                pts.push((t, v));
                t += dt;
                v = (v + a * dt.min(2.0)).max(0.0);
                let _ = i;
            }
            TripTrace::on_segment("t", "s", &pts)
        })
    }

    proptest! {
        #[test]
        fn raised_threshold_events_nest_inside_lower_ones(trace in arb_trace(), lo in 0.5f64..6.0, bump in 0.0f64..4.0) {
            // A stricter threshold can split one event into several, so counts
            // are not monotone; every strict event must sit inside a loose one.
            let low = detect_hbes(&trace, &cfg(lo));
            let high = detect_hbes(&trace, &cfg(lo + bump));
            for h in &high {
                let host = low.iter().rev().find(|l| l.onset_time_s <= h.onset_time_s);
                prop_assert!(host.is_some());
                prop_assert!(host.unwrap().peak_decel_mps2 >= h.peak_decel_mps2 - 1e-12);
            }
            if bump == 0.0 {
                prop_assert_eq!(low.len(), high.len());
            }
        }

        #[test]
        fn time_shift_changes_nothing(trace in arb_trace(), shift in -1e3f64..1e3) {
            let mut shifted = trace.clone();
            for s in &mut shifted.samples {
                s.timestamp_s += shift;
            }
            let c = DetectorConfig::default();
            let a = detect_hbes(&trace, &c);
            let b = detect_hbes(&shifted, &c);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.onset_time_s + shift - y.onset_time_s).abs() < 1e-9);
                prop_assert!((x.peak_decel_mps2 - y.peak_decel_mps2).abs() < 1e-6 * x.peak_decel_mps2.max(1.0));
            }
            let da = monitored_distance(&trace, 5.0);
            let db = monitored_distance(&shifted, 5.0);
            prop_assert!((da - db).abs() <= 1e-9 * da.max(1e-12));
        }

        #[test]
        fn splitting_preserves_distance(trace in arb_trace(), frac in 0.0f64..1.0) {
            let n = trace.samples.len();
            let k = ((n - 1) as f64 * frac) as usize;
            let a = TripTrace::new("a", trace.samples[..=k].to_vec());
            let b = TripTrace::new("b", trace.samples[k..].to_vec());
            let whole = monitored_distance(&trace, 5.0);
            let parts = monitored_distance(&a, 5.0) + monitored_distance(&b, 5.0);
            prop_assert!((whole - parts).abs() <= 1e-9 * whole.max(1e-300));
        }
    }
}
