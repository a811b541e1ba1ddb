//! Helpers shared by the integration tests: reference implementations that do
//! not go through the library code paths they check.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hbe_core::glm::Design;
use hbe_core::model::{SpeedSample, TripTrace};
use hbe_core::synth::Stream;
use statrs::function::gamma::ln_gamma;

pub struct Micro {
    pub name: String,
    pub names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub exposure: Vec<f64>,
}

impl Micro {
    pub fn design(&self) -> Design {
        Design::from_rows(
            self.names.clone(),
            &self.x,
            self.y.clone(),
            self.exposure.iter().map(|e| e.ln()).collect(),
        )
        .unwrap()
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Micro-datasets: `y,exposure[,x1[,x2]]`, an intercept is prepended.
pub fn micro_datasets() -> Vec<Micro> {
    (1..=5)
        .map(|k| {
            let name = format!("micro_{k}");
            let text = std::fs::read_to_string(data_dir().join(format!("{name}.csv"))).unwrap();
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap().split(',').collect();
            let mut names = vec!["(Intercept)".to_string()];
            names.extend(header[2..].iter().map(|s| s.to_string()));
            let (mut x, mut y, mut exposure) = (Vec::new(), Vec::new(), Vec::new());
            for l in lines.filter(|l| !l.trim().is_empty()) {
                let v: Vec<f64> = l.split(',').map(|s| s.trim().parse().unwrap()).collect();
                y.push(v[0]);
                exposure.push(v[1]);
                let mut row = vec![1.0];
                row.extend(&v[2..]);
                x.push(row);
            }
            Micro {
                name,
                names,
                x,
                y,
                exposure,
            }
        })
        .collect()
}

/// Negative binomial log-likelihood in the shape form
/// `lnΓ(y+r) − lnΓ(r) − lnΓ(y+1) + r ln(r/(r+μ)) + y ln(μ/(r+μ))`, `r = 1/κ`;
/// Poisson at `κ = 0`.
pub fn ref_loglik(m: &Micro, beta: &[f64], kappa: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..m.y.len() {
        let eta: f64 = m.x[i].iter().zip(beta).map(|(a, b)| a * b).sum();
        let mu = m.exposure[i] * eta.exp();
        let y = m.y[i];
        if kappa == 0.0 {
            ll += y * mu.ln() - mu - ln_gamma(y + 1.0);
        } else {
            let r = 1.0 / kappa;
            ll += ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) + r * (r / (r + mu)).ln() + y * (mu / (r + mu)).ln();
        }
    }
    ll
}

/// Coarse-to-fine lattice search for the maximum of `f`.
///
/// Each level scans a full grid of `±half` steps around the current centre and
/// re-centres until the best point is interior; the last level has step
/// `final_step`. `lower[k]` clips coordinate `k` from below.
pub fn grid_argmax(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    lower: &[f64],
    coarse: f64,
    final_step: f64,
) -> (Vec<f64>, f64) {
    let d = lo.len();
    let mut best = vec![0.0; d];
    let mut best_val = f64::NEG_INFINITY;
    // exhaustive coarse scan over the box
    let counts: Vec<usize> = (0..d).map(|k| ((hi[k] - lo[k]) / coarse).round() as usize + 1).collect();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    loop {
        for k in 0..d {
            point[k] = lo[k] + idx[k] as f64 * coarse;
        }
        let v = f(&point);
        if v > best_val {
            best_val = v;
            best.clone_from(&point);
        }
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }

    let mut step = coarse;
    while step > final_step * 1.0001 {
        step /= 10.0;
        let half = 6i64;
        for _ in 0..200 {
            let centre = best.clone();
            let mut on_edge = false;
            let mut off = vec![-half; d];
            loop {
                let mut ok = true;
                for k in 0..d {
                    point[k] = centre[k] + off[k] as f64 * step;
                    if point[k] < lower[k] - 1e-12 {
                        ok = false;
                    }
                    point[k] = point[k].max(lower[k]);
                }
                if ok {
                    let v = f(&point);
                    if v > best_val {
                        best_val = v;
                        best.clone_from(&point);
                        on_edge = off.iter().any(|o| o.abs() == half);
                    }
                }
                let mut k = 0;
                while k < d {
                    off[k] += 1;
                    if off[k] <= half {
                        break;
                    }
                    off[k] = -half;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            if !on_edge {
                break;
            }
        }
    }
    (best, best_val)
}

/// Event found by [`naive_detect`]: `(onset time, onset segment, peak deceleration)`.
pub type NaiveEvent = (f64, String, f64);

/// Straightforward quadratic reference detector.
///
/// Flags every consecutive-sample pair whose time step is within the gap
/// limit and whose deceleration reaches the threshold, groups maximal flagged
/// stretches inside the same run, then repeatedly merges neighbours whose gap
/// is below `min_gap` until nothing changes.
pub fn naive_detect(trace: &TripTrace, threshold: f64, min_gap: f64, max_dt: f64) -> Vec<NaiveEvent> {
    let s = &trace.samples;
    if s.len() < 2 {
        return Vec::new();
    }
    // run id of each sample
    let mut run = vec![0usize; s.len()];
    for i in 1..s.len() {
        run[i] = run[i - 1] + usize::from(s[i].timestamp_s - s[i - 1].timestamp_s > max_dt);
    }
    // (start sample, end time, run, peak)
    let mut events: Vec<(usize, f64, usize, f64)> = Vec::new();
    let flagged = |i: usize| -> Option<f64> {
        let dt = s[i + 1].timestamp_s - s[i].timestamp_s;
        if dt > max_dt {
            return None;
        }
        let decel = -(s[i + 1].speed_mps - s[i].speed_mps) / dt;
        (decel >= threshold).then_some(decel)
    };
    for i in 0..s.len() - 1 {
        let Some(d) = flagged(i) else { continue };
        let starts_stretch = i == 0 || flagged(i - 1).is_none();
        if starts_stretch {
            events.push((i, s[i + 1].timestamp_s, run[i], d));
        } else {
            let e = events.last_mut().unwrap();
            e.1 = s[i + 1].timestamp_s;
            e.3 = e.3.max(d);
        }
    }
    loop {
        let mut merged = false;
        for j in 1..events.len() {
            let (a, b) = (events[j - 1], events[j]);
            if a.2 == b.2 && s[b.0].timestamp_s - a.1 < min_gap {
                events[j - 1] = (a.0, b.1, a.2, a.3.max(b.3));
                events.remove(j);
                merged = true;
                break;
            }
        }
        if !merged {
            break;
        }
    }
    events
        .into_iter()
        .map(|(i, _, _, peak)| (s[i].timestamp_s, s[i].segment_id.clone(), peak))
        .collect()
}

/// Random trip: mostly 1 s sampling with jitter and occasional long gaps,
/// piecewise-constant acceleration regimes, segment changes every so often.
pub fn random_trace(seed: u64, index: u64, max_len: usize) -> TripTrace {
    let mut r = Stream::new(seed, 99, index);
    let n = 2 + (r.uniform() * (max_len - 1) as f64) as usize;
    let mut t = r.uniform() * 100.0;
    let mut v = 5.0 + 25.0 * r.uniform();
    let mut seg = 0u32;
    let mut accel = 0.0;
    let mut regime_left = 0u32;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        samples.push(SpeedSample {
            timestamp_s: t,
            speed_mps: v,
            segment_id: format!("s{seg}"),
        });
        if r.bernoulli(0.01) {
            seg += 1;
        }
        let dt = if r.bernoulli(0.01) { 5.0 + 20.0 * r.uniform() } else { 0.5 + r.uniform() };
        if regime_left == 0 {
            accel = -7.0 + 10.0 * r.uniform();
            regime_left = r.int_between(1, 10);
        }
        regime_left -= 1;
        t += dt;
        v = (v + accel * dt.min(2.0)).max(0.0);
    }
    TripTrace::new(format!("trip{index}"), samples)
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn run_cli(args: &[&str]) -> CliOutput {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["hbe"];
    full.extend_from_slice(args);
    let code = hbe_core::cli::run(full, &mut out, &mut err);
    CliOutput {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Drop the leading `#` comment block of a file written by the CLI.
pub fn strip_comments(text: &str) -> String {
    text.lines()
        .skip_while(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Analysis rows drawn straight from the generator (no files involved).
pub fn simulated_rows(cfg: &hbe_core::synth::GenConfig) -> Vec<hbe_core::model::AnalysisRow> {
    let net = hbe_core::synth::generate_segments(cfg).unwrap();
    let counts =
        hbe_core::synth::sample_crashes(&net, &cfg.model_spec(), &cfg.beta_true, cfg.kappa_true, cfg.seed).unwrap();
    (0..net.segments.len())
        .map(|i| {
            let mut r = net.analysis_row(i);
            r.crash_count = counts[i];
            r.crash_rate = counts[i] as f64 / r.exposure_mvmt;
            r
        })
        .collect()
}

pub fn small_config(n: usize, seed: u64, kappa: f64) -> hbe_core::synth::GenConfig {
    let mut cfg = hbe_core::synth::GenConfig::preset(hbe_core::synth::Preset::Va);
    cfg.n_segments = n;
    cfg.seed = seed;
    cfg.kappa_true = kappa;
    cfg
}

/// `(estimate, std_error, p_value)` of one coefficient row of a fit report.
pub fn coef(report: &str, name: &str) -> (f64, f64, f64) {
    let row = strip_comments(report)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
        .find(|f| f[0] == name)
        .unwrap_or_else(|| panic!("no row {name} in report"));
    (row[1].parse().unwrap(), row[2].parse().unwrap(), row[4].parse().unwrap())
}

/// Data rows of a CLI-written CSV, header excluded.
pub fn data_rows(text: &str) -> usize {
    strip_comments(text).lines().count().saturating_sub(1)
}
