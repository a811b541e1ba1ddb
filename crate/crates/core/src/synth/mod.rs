//! Deterministic synthetic road networks with negative binomial crash counts
//! under known coefficients.
//!
//! Every segment draws from its own substream (see [`rng`]), so output does
//! not depend on evaluation order or thread count.

pub mod config;
pub mod rng;

use chrono::NaiveDate;

pub use config::{GenConfig, Preset, KEYS as GEN_KEYS};
pub use rng::Stream;

use crate::aggregate::compute_exposure;
use crate::error::SynthError;
use crate::ingest::DateWindow;
use crate::model::{AnalysisRow, HbeSummary, RoadSegment, RoadType, SpeedSample, TripTrace};
use crate::par;

const TAG_SEGMENT: u64 = 1;
const TAG_HBE: u64 = 2;
const TAG_CRASH: u64 = 3;
const TAG_DATE: u64 = 4;

/// Segments with their hard-braking summaries, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub segments: Vec<RoadSegment>,
    pub hbe: Vec<HbeSummary>,
}

impl Network {
    /// Covariate view of segment `i` for the model design.
    pub fn analysis_row(&self, i: usize) -> AnalysisRow {
        let s = &self.segments[i];
        let h = self.hbe[i];
        AnalysisRow {
            segment_id: s.segment_id.clone(),
            exposure_mvmt: compute_exposure(s),
            crash_count: 0,
            crash_rate: 0.0,
            hbe_count: h.hbe_count,
            hbe_distance_miles: h.hbe_distance_miles,
            hbe_rate: if h.hbe_distance_miles > 0.0 {
                h.hbe_count as f64 / h.hbe_distance_miles
            } else {
                0.0
            },
            road_type: s.road_type,
            num_lanes: s.num_lanes,
            has_ramp: s.has_ramp,
            lane_changes: s.lane_changes,
            cum_turn_angle_deg: s.cum_turn_angle_deg,
            length_miles: Some(s.length_miles),
        }
    }
}

pub fn segment_id(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(6);
    format!("seg{i:0width$}")
}

fn pick_type(u: f64, proportions: &[f64; 4]) -> RoadType {
    let mut acc = 0.0;
    for t in RoadType::ALL {
        acc += proportions[t.index()];
        if u < acc {
            return t;
        }
    }
    RoadType::ALL
        .into_iter()
        .rev()
        .find(|t| proportions[t.index()] > 0.0)
        .unwrap_or(RoadType::Type4)
}

fn draw_segment(cfg: &GenConfig, i: usize) -> (RoadSegment, HbeSummary) {
    let mut s = Stream::new(cfg.seed, TAG_SEGMENT, i as u64);
    let road_type = pick_type(s.uniform(), &cfg.type_proportions);
    let k = road_type.index();
    let length_miles = s.lognormal(cfg.length_median[k].ln(), cfg.length_sigma);
    let aadt = s.lognormal(cfg.aadt_median[k].ln(), cfg.aadt_sigma).round().max(1.0);
    let num_lanes = s.int_between(cfg.lanes_min[k], cfg.lanes_max[k]);
    let has_ramp = s.bernoulli(cfg.ramp_prob[k]);
    let lane_changes = s.poisson(cfg.lane_change_mean) as u32;
    let cum_turn_angle_deg = s.exponential(cfg.turn_angle_mean_deg[k]);
    let segment = RoadSegment {
        segment_id: segment_id(i, cfg.n_segments),
        length_miles,
        aadt,
        road_type,
        num_lanes,
        has_ramp,
        lane_changes,
        cum_turn_angle_deg,
        observed_years: f64::from(cfg.observed_years),
    };

    let mut h = Stream::new(cfg.seed, TAG_HBE, i as u64);
    let latent = if h.bernoulli(cfg.hbe_zero_prob) {
        0.0
    } else {
        h.lognormal(cfg.hbe_log_mu, cfg.hbe_log_sigma)
    };
    let distance = h.lognormal(cfg.hbe_distance_median.ln(), cfg.hbe_distance_sigma);
    let count = h.poisson(latent * distance);
    (
        segment,
        HbeSummary {
            hbe_count: count,
            hbe_distance_miles: distance,
        },
    )
}

/// Segments and hard-braking summaries. Realized HBE rates are `count / distance`
/// with `count ~ Poisson(latent rate × distance)`.
pub fn generate_segments(cfg: &GenConfig) -> Result<Network, SynthError> {
    cfg.validate()?;
    let drawn = par::map_indexed(cfg.n_segments, |i| draw_segment(cfg, i));
    let (segments, hbe) = drawn.into_iter().unzip();
    Ok(Network { segments, hbe })
}

/// Expected crash count `exposure (MVMT) × exp(xᵀβ)` for every segment.
pub fn expected_crashes(net: &Network, spec: &crate::glm::ModelSpec, beta: &[f64]) -> Result<Vec<f64>, SynthError> {
    let p = spec.column_names().len();
    if beta.len() != p {
        return Err(SynthError::BetaLength {
            expected: p,
            got: beta.len(),
        });
    }
    let mut out = Vec::with_capacity(net.segments.len());
    for i in 0..net.segments.len() {
        let row = net.analysis_row(i);
        if !(row.exposure_mvmt > 0.0) {
            return Err(SynthError::NonPositiveExposure(row.segment_id));
        }
        let eta: f64 = spec.encode(&row).iter().zip(beta).map(|(x, b)| x * b).sum();
        out.push(row.exposure_mvmt * eta.exp());
    }
    Ok(out)
}

/// Gamma–Poisson crash counts: `rate ~ Gamma(1/κ, κμ)`, `count ~ Poisson(rate)`.
pub fn sample_crashes(
    net: &Network,
    spec: &crate::glm::ModelSpec,
    beta: &[f64],
    kappa: f64,
    seed: u64,
) -> Result<Vec<u64>, SynthError> {
    if !(kappa >= 0.0) {
        return Err(SynthError::NegativeKappa);
    }
    let mu = expected_crashes(net, spec, beta)?;
    Ok(sample_counts(&mu, kappa, seed))
}

/// Negative binomial draws for explicit means, one substream per index.
pub fn sample_counts(mu: &[f64], kappa: f64, seed: u64) -> Vec<u64> {
    par::map_indexed(mu.len(), |i| Stream::new(seed, TAG_CRASH, i as u64).negbin(mu[i], kappa))
}

/// Spread `count` crash dates uniformly over the window, sorted.
pub fn crash_dates(seed: u64, index: usize, count: u64, window: &DateWindow) -> Vec<NaiveDate> {
    let mut s = Stream::new(seed, TAG_DATE, index as u64);
    let days = window.num_days() as u64;
    let mut out: Vec<NaiveDate> = (0..count)
        .map(|_| {
            let offset = ((s.uniform() * days as f64) as u64).min(days - 1);
            window.start + chrono::Days::new(offset)
        })
        .collect();
    out.sort();
    out
}

/// Cruise speed, braking and recovery profile of synthetic telemetry.
pub const TELEMETRY_CRUISE_MPS: f64 = 25.0;
const BRAKE_DECEL: f64 = 4.0;
const BRAKE_SECONDS: u32 = 3;
const RECOVER_ACCEL: f64 = 1.0;

/// A 1 Hz trip over one segment containing exactly `summary.hbe_count`
/// braking episodes (−4 m/s² for 3 s, then +1 m/s² recovery) and covering
/// `summary.hbe_distance_miles` when that distance is long enough to fit them.
pub fn synth_trip(trip_id: &str, segment_id: &str, summary: HbeSummary) -> TripTrace {
    let cruise = TELEMETRY_CRUISE_MPS;
    let low = cruise - BRAKE_DECEL * f64::from(BRAKE_SECONDS);
    let recover_s = ((cruise - low) / RECOVER_ACCEL).round() as u32;
    let episode_m = {
        let brake: f64 = (0..BRAKE_SECONDS).map(|k| cruise - BRAKE_DECEL * (f64::from(k) + 0.5)).sum();
        let recover: f64 = (0..recover_s).map(|k| low + RECOVER_ACCEL * (f64::from(k) + 0.5)).sum();
        brake + recover
    };
    let target_m = summary.hbe_distance_miles * crate::model::METERS_PER_MILE;
    let k = summary.hbe_count;
    let filler_m = (target_m - k as f64 * episode_m).max(0.0);
    let leg_s = filler_m / (k as f64 + 1.0) / cruise;

    let mut pts: Vec<(f64, f64)> = vec![(0.0, cruise)];
    let mut t = 0.0;
    let cruise_for = |pts: &mut Vec<(f64, f64)>, t: &mut f64, secs: f64| {
        let whole = secs.floor() as u64;
        for _ in 0..whole {
            *t += 1.0;
            pts.push((*t, cruise));
        }
        let frac = secs - whole as f64;
        if frac > 1e-9 {
            *t += frac;
            pts.push((*t, cruise));
        }
    };
    for _ in 0..k {
        cruise_for(&mut pts, &mut t, leg_s);
        for j in 1..=BRAKE_SECONDS {
            t += 1.0;
            pts.push((t, cruise - BRAKE_DECEL * f64::from(j)));
        }
        for j in 1..=recover_s {
            t += 1.0;
            pts.push((t, low + RECOVER_ACCEL * f64::from(j)));
        }
    }
    cruise_for(&mut pts, &mut t, leg_s);
    let samples = pts
        .into_iter()
        .map(|(t, v)| SpeedSample {
            timestamp_s: t,
            speed_mps: v,
            segment_id: segment_id.to_string(),
        })
        .collect();
    TripTrace::new(trip_id, samples)
}
