mod common;

use common::{simulated_rows, small_config};
use hbe_core::analysis::summarize_by_road_type;
use hbe_core::model::RoadType;
use hbe_core::synth::{generate_segments, sample_counts, GenConfig, Preset};

fn moments(xs: &[u64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let v = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[test]
fn negbin_variance_law() {
    let n = 100_000;
    for &(mu, kappa) in &[(2.0, 1.0), (0.5, 0.5), (8.0, 0.2), (3.0, 0.0)] {
        let xs = sample_counts(&vec![mu; n], kappa, 17);
        let (m, v) = moments(&xs);
        let var = mu + kappa * mu * mu;
        assert!((m - mu).abs() < 3.0 * (var / n as f64).sqrt(), "mu {mu} kappa {kappa}: mean {m}");
        assert!((v - var).abs() / var < 0.05, "mu {mu} kappa {kappa}: var {v} vs {var}");
    }
    let xs = sample_counts(&vec![2.0; n], 1.0, 3);
    let (_, v) = moments(&xs);
    assert!((v - 6.0).abs() / 6.0 < 0.10);
}

#[test]
fn zero_coefficients_give_unit_rate() {
    let xs = sample_counts(&vec![1.0; 100_000], 0.0, 9);
    let (m, _) = moments(&xs);
    assert!((m - 1.0).abs() < 3.0 * (1.0f64 / 100_000.0).sqrt());
}

#[test]
fn hbe_rate_mean_matches_configured_distribution() {
    let mut cfg = GenConfig::preset(Preset::Va);
    cfg.n_segments = 100_000;
    let net = generate_segments(&cfg).unwrap();
    let mean = (0..net.segments.len()).map(|i| net.analysis_row(i).hbe_rate).sum::<f64>() / 1e5;
    let want = cfg.hbe_rate_mean();
    assert!((mean - want).abs() / want < 0.10, "{mean} vs {want}");
}

#[test]
fn different_seeds_differ() {
    let a = generate_segments(&small_config(200, 1, 0.5)).unwrap();
    let b = generate_segments(&small_config(200, 2, 0.5)).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, generate_segments(&small_config(200, 1, 0.5)).unwrap());
}

#[test]
fn ca_like_controlled_access_has_lowest_crash_rate() {
    let mut cfg = GenConfig::preset(Preset::Ca);
    cfg.n_segments = 20_000;
    let summary = summarize_by_road_type(&simulated_rows(&cfg)).unwrap();
    let t4 = summary.iter().find(|s| s.road_type == RoadType::Type4).unwrap().mean_crash_rate;
    for s in summary.iter().filter(|s| s.road_type != RoadType::Type4) {
        assert!(s.mean_crash_rate > t4, "{:?}", summary);
    }
}
