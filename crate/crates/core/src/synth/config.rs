//! Generator configuration and its `key = value` text form.

use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::SynthError;
use crate::glm::{HbeTransform, ModelSpec, Predictor};

/// Coefficient presets, per-MVMT rate scale, in default design-column order:
/// intercept, hbe_rate, Type1, Type2, Type3 (vs Type4), lanes, ramp, lane
/// changes, cumulative turning angle.
pub const VA_BETA: [f64; 9] = [-0.81, 0.23, 1.22, 1.41, 1.08, 0.35, 0.52, 0.07, -0.001];
pub const CA_BETA: [f64; 9] = [0.65, 0.02, 0.35, 0.35, 0.24, 0.04, 1.24, -0.09, 0.0002];

/// Keys accepted by [`GenConfig::set`].
pub const KEYS: [&str; 24] = [
    "preset",
    "n_segments",
    "seed",
    "beta_true",
    "kappa_true",
    "hbe_transform",
    "type_proportions",
    "aadt_median",
    "aadt_sigma",
    "length_median",
    "length_sigma",
    "lanes_min",
    "lanes_max",
    "ramp_prob",
    "lane_change_mean",
    "turn_angle_mean_deg",
    "hbe_zero_prob",
    "hbe_log_mu",
    "hbe_log_sigma",
    "hbe_distance_median",
    "hbe_distance_sigma",
    "observed_years",
    "window_start",
    "telemetry_segments",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Va,
    Ca,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "va" | "va-like" => Ok(Preset::Va),
            "ca" | "ca-like" => Ok(Preset::Ca),
            other => Err(format!("unknown preset {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub n_segments: usize,
    pub seed: u64,
    /// True coefficients on the per-MVMT rate scale.
    pub beta_true: Vec<f64>,
    pub kappa_true: f64,
    pub hbe_transform: HbeTransform,
    /// Shares of Type1..Type4.
    pub type_proportions: [f64; 4],
    pub aadt_median: [f64; 4],
    pub aadt_sigma: f64,
    pub length_median: [f64; 4],
    pub length_sigma: f64,
    pub lanes_min: [u32; 4],
    pub lanes_max: [u32; 4],
    pub ramp_prob: [f64; 4],
    pub lane_change_mean: f64,
    pub turn_angle_mean_deg: [f64; 4],
    /// Probability of a zero latent HBE rate.
    pub hbe_zero_prob: f64,
    /// Log-normal parameters of the positive latent HBE rate (events/mile).
    pub hbe_log_mu: f64,
    pub hbe_log_sigma: f64,
    pub hbe_distance_median: f64,
    pub hbe_distance_sigma: f64,
    pub observed_years: u32,
    pub window_start: NaiveDate,
    /// Emit raw telemetry for this many leading segments.
    pub telemetry_segments: usize,
}

impl GenConfig {
    pub fn preset(preset: Preset) -> Self {
        let beta = match preset {
            Preset::Va => VA_BETA,
            Preset::Ca => CA_BETA,
        };
        let shares = match preset {
            // segment counts by road type in the two state datasets
            Preset::Va => [12_421.0, 13_322.0, 25_045.0, 14_730.0],
            Preset::Ca => [48_072.0, 12_510.0, 16_768.0, 22_752.0],
        };
        let total: f64 = shares.iter().sum();
        GenConfig {
            n_segments: 50_000,
            seed: 20_251_209,
            beta_true: beta.to_vec(),
            kappa_true: 0.5,
            hbe_transform: HbeTransform::Log1pScaled,
            type_proportions: shares.map(|s| s / total),
            aadt_median: [800.0, 3_000.0, 4_000.0, 12_000.0],
            aadt_sigma: 0.6,
            length_median: [0.15, 0.2, 0.25, 0.3],
            length_sigma: 0.5,
            lanes_min: [1, 1, 1, 2],
            lanes_max: [2, 3, 3, 5],
            ramp_prob: [0.02, 0.05, 0.08, 0.10],
            lane_change_mean: 0.4,
            turn_angle_mean_deg: [40.0, 30.0, 25.0, 10.0],
            hbe_zero_prob: 0.1,
            hbe_log_mu: 0.01f64.ln(),
            hbe_log_sigma: 0.8,
            hbe_distance_median: 200.0,
            hbe_distance_sigma: 0.7,
            observed_years: 10,
            window_start: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            telemetry_segments: 0,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec::new(Predictor::ALL.to_vec(), self.hbe_transform).expect("distinct predictors")
    }

    /// Mean of the zero-inflated log-normal latent HBE rate.
    pub fn hbe_rate_mean(&self) -> f64 {
        (1.0 - self.hbe_zero_prob) * (self.hbe_log_mu + 0.5 * self.hbe_log_sigma.powi(2)).exp()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |f: &str, r: &str| Err(SynthError::config(f, r));
        if self.n_segments == 0 {
            return bad("n_segments", "must be > 0");
        }
        let p = self.model_spec().column_names().len();
        if self.beta_true.len() != p {
            return bad("beta_true", &format!("expected {p} values"));
        }
        if self.beta_true.iter().any(|b| !b.is_finite()) {
            return bad("beta_true", "must be finite");
        }
        if !(self.kappa_true >= 0.0 && self.kappa_true.is_finite()) {
            return bad("kappa_true", "must be >= 0");
        }
        if self.type_proportions.iter().any(|&x| !(x >= 0.0)) || (self.type_proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("type_proportions", "must be non-negative and sum to 1");
        }
        for (name, arr) in [
            ("aadt_median", &self.aadt_median),
            ("length_median", &self.length_median),
            ("turn_angle_mean_deg", &self.turn_angle_mean_deg),
        ] {
            if arr.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return bad(name, "must be > 0");
            }
        }
        for (name, v) in [
            ("aadt_sigma", self.aadt_sigma),
            ("length_sigma", self.length_sigma),
            ("hbe_log_sigma", self.hbe_log_sigma),
            ("hbe_distance_sigma", self.hbe_distance_sigma),
            ("lane_change_mean", self.lane_change_mean),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be >= 0");
            }
        }
        if !self.hbe_log_mu.is_finite() {
            return bad("hbe_log_mu", "must be finite");
        }
        if !(self.hbe_distance_median > 0.0 && self.hbe_distance_median.is_finite()) {
            return bad("hbe_distance_median", "must be > 0");
        }
        if !(0.0..=1.0).contains(&self.hbe_zero_prob) {
            return bad("hbe_zero_prob", "must be in [0, 1]");
        }
        if self.ramp_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("ramp_prob", "must be in [0, 1]");
        }
        if self.lanes_min.iter().zip(&self.lanes_max).any(|(lo, hi)| *lo < 1 || lo > hi) {
            return bad("lanes_min", "need 1 <= lanes_min <= lanes_max");
        }
        if self.observed_years == 0 {
            return bad("observed_years", "must be > 0");
        }
        Ok(())
    }

    /// Parse `key = value` lines over the preset named by `preset` (default VA).
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SynthError::config(format!("line {}", lineno + 1), "expected key = value"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let preset = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, v)) => v.parse().map_err(|e: String| SynthError::config("preset", e))?,
            None => Preset::Va,
        };
        let mut cfg = GenConfig::preset(preset);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SynthError> {
        fn one<T: FromStr>(key: &str, v: &str) -> Result<T, SynthError> {
            v.trim()
                .parse()
                .map_err(|_| SynthError::config(key, format!("cannot parse {v:?}")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, SynthError> {
            v.split(',').map(|x| one(key, x)).collect()
        }
        fn four<T: FromStr + Copy>(key: &str, v: &str) -> Result<[T; 4], SynthError> {
            let xs: Vec<T> = list(key, v)?;
            xs.try_into().map_err(|_| SynthError::config(key, "expected 4 comma-separated values"))
        }
        match key {
            "preset" => {}
            "n_segments" => self.n_segments = one(key, value)?,
            "seed" => self.seed = one(key, value)?,
            "beta_true" => self.beta_true = list(key, value)?,
            "kappa_true" => self.kappa_true = one(key, value)?,
            "hbe_transform" => {
                self.hbe_transform = value.parse().map_err(|e: String| SynthError::config(key, e))?
            }
            "type_proportions" => self.type_proportions = four(key, value)?,
            "aadt_median" => self.aadt_median = four(key, value)?,
            "aadt_sigma" => self.aadt_sigma = one(key, value)?,
            "length_median" => self.length_median = four(key, value)?,
            "length_sigma" => self.length_sigma = one(key, value)?,
            "lanes_min" => self.lanes_min = four(key, value)?,
            "lanes_max" => self.lanes_max = four(key, value)?,
            "ramp_prob" => self.ramp_prob = four(key, value)?,
            "lane_change_mean" => self.lane_change_mean = one(key, value)?,
            "turn_angle_mean_deg" => self.turn_angle_mean_deg = four(key, value)?,
            "hbe_zero_prob" => self.hbe_zero_prob = one(key, value)?,
            "hbe_log_mu" => self.hbe_log_mu = one(key, value)?,
            "hbe_log_sigma" => self.hbe_log_sigma = one(key, value)?,
            "hbe_distance_median" => self.hbe_distance_median = one(key, value)?,
            "hbe_distance_sigma" => self.hbe_distance_sigma = one(key, value)?,
            "observed_years" => self.observed_years = one(key, value)?,
            "window_start" => {
                self.window_start = crate::ingest::parse_date(value)
                    .ok_or_else(|| SynthError::config(key, format!("cannot parse {value:?}")))?
            }
            "telemetry_segments" => self.telemetry_segments = one(key, value)?,
            other => return Err(SynthError::config(other, "unknown key")),
        }
        Ok(())
    }

    /// Canonical `key = value` form; [`GenConfig::parse`] reads it back.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(xs: &[T]) -> String {
            xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        let mut lines = vec![
            format!("n_segments = {}", self.n_segments),
            format!("seed = {}", self.seed),
            format!("beta_true = {}", join(&self.beta_true)),
            format!("kappa_true = {}", self.kappa_true),
            format!("hbe_transform = {}", self.hbe_transform.key()),
            format!("type_proportions = {}", join(&self.type_proportions)),
            format!("aadt_median = {}", join(&self.aadt_median)),
            format!("aadt_sigma = {}", self.aadt_sigma),
            format!("length_median = {}", join(&self.length_median)),
            format!("length_sigma = {}", self.length_sigma),
            format!("lanes_min = {}", join(&self.lanes_min)),
            format!("lanes_max = {}", join(&self.lanes_max)),
            format!("ramp_prob = {}", join(&self.ramp_prob)),
            format!("lane_change_mean = {}", self.lane_change_mean),
            format!("turn_angle_mean_deg = {}", join(&self.turn_angle_mean_deg)),
            format!("hbe_zero_prob = {}", self.hbe_zero_prob),
            format!("hbe_log_mu = {}", self.hbe_log_mu),
            format!("hbe_log_sigma = {}", self.hbe_log_sigma),
            format!("hbe_distance_median = {}", self.hbe_distance_median),
            format!("hbe_distance_sigma = {}", self.hbe_distance_sigma),
            format!("observed_years = {}", self.observed_years),
            format!("window_start = {}", self.window_start),
            format!("telemetry_segments = {}", self.telemetry_segments),
        ];
        lines.push(String::new());
        lines.join("\n")
    }
}
