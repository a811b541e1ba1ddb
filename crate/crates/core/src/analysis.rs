//! Exploratory summaries: per-road-type statistics, rank binning of crash rate
//! against HBE rate, and a log-log plot of the bins.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::AnalysisError;
use crate::model::{AnalysisRow, RoadType};

/// x position of the zero-HBE bin on the log plot.
pub const ZERO_BIN_X: f64 = -10.0;
pub const NUM_DECILES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct TypeSummary {
    pub road_type: RoadType,
    pub n_segments: usize,
    /// `None` when any row lacks a length.
    pub total_length_miles: Option<f64>,
    pub total_crashes: u64,
    pub mean_crash_rate: f64,
    pub mean_hbe_rate: f64,
}

/// Unweighted per-segment means and totals for each road type present.
pub fn summarize_by_road_type(rows: &[AnalysisRow]) -> Result<Vec<TypeSummary>, AnalysisError> {
    if rows.is_empty() {
        return Err(AnalysisError::NoRows);
    }
    let mut groups: BTreeMap<RoadType, Vec<&AnalysisRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.road_type).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(road_type, g)| {
            let n = g.len() as f64;
            TypeSummary {
                road_type,
                n_segments: g.len(),
                total_length_miles: g.iter().map(|r| r.length_miles).sum(),
                total_crashes: g.iter().map(|r| r.crash_count).sum(),
                mean_crash_rate: g.iter().map(|r| r.crash_rate).sum::<f64>() / n,
                mean_hbe_rate: g.iter().map(|r| r.hbe_rate).sum::<f64>() / n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinRow {
    pub road_type: RoadType,
    /// 0 is the zero-HBE bin; 1..=10 are rank deciles of positive rates.
    pub bin_index: usize,
    pub hbe_rate_mean: f64,
    pub crash_rate_mean: f64,
    pub n_segments: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binning {
    pub bins: Vec<BinRow>,
    /// Road types skipped for having fewer than ten positive-rate segments.
    pub skipped: Vec<(RoadType, usize)>,
}

fn bin_row(road_type: RoadType, bin_index: usize, rows: &[&AnalysisRow]) -> BinRow {
    let n = rows.len() as f64;
    BinRow {
        road_type,
        bin_index,
        hbe_rate_mean: rows.iter().map(|r| r.hbe_rate).sum::<f64>() / n,
        crash_rate_mean: rows.iter().map(|r| r.crash_rate).sum::<f64>() / n,
        n_segments: rows.len(),
    }
}

/// Rank deciles of HBE rate per road type.
///
/// Positive-rate segments are ordered by `(hbe_rate, segment_id)` and split
/// into ten contiguous groups whose sizes differ by at most one; zero-rate
/// segments form bin 0 (omitted when there are none).
pub fn decile_bins(rows: &[AnalysisRow]) -> Binning {
    let mut groups: BTreeMap<RoadType, Vec<&AnalysisRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.road_type).or_default().push(r);
    }
    let mut out = Binning::default();
    for (road_type, group) in groups {
        let (zero, mut positive): (Vec<_>, Vec<_>) = group.into_iter().partition(|r| r.hbe_rate == 0.0);
        if positive.len() < NUM_DECILES {
            out.skipped.push((road_type, positive.len()));
            continue;
        }
        positive.sort_by(|a, b| {
            a.hbe_rate
                .total_cmp(&b.hbe_rate)
                .then_with(|| a.segment_id.cmp(&b.segment_id))
        });
        if !zero.is_empty() {
            out.bins.push(bin_row(road_type, 0, &zero));
        }
        let n = positive.len();
        for b in 0..NUM_DECILES {
            let lo = b * n / NUM_DECILES;
            let hi = (b + 1) * n / NUM_DECILES;
            out.bins.push(bin_row(road_type, b + 1, &positive[lo..hi]));
        }
    }
    out
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman ρ between decile index (1..=10) and mean crash rate, per road type.
pub fn decile_trend(bins: &[BinRow]) -> BTreeMap<RoadType, f64> {
    let mut per: BTreeMap<RoadType, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for b in bins.iter().filter(|b| b.bin_index >= 1) {
        let e = per.entry(b.road_type).or_default();
        e.0.push(b.bin_index as f64);
        e.1.push(b.crash_rate_mean);
    }
    per.into_iter().map(|(t, (x, y))| (t, spearman(&x, &y))).collect()
}

/// Geometry of the bin plot, in data coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinPlot {
    /// One polyline of `(ln hbe_rate, ln crash_rate)` per road type.
    pub lines: Vec<(RoadType, Vec<(f64, f64)>)>,
    /// Zero-HBE bins drawn at `x = ZERO_BIN_X`.
    pub zero_points: Vec<(RoadType, (f64, f64))>,
}

/// Log-log plot geometry. Bins with a non-positive mean crash rate have no
/// logarithm and are left out.
pub fn plot_geometry(bins: &[BinRow]) -> Result<BinPlot, AnalysisError> {
    if bins.is_empty() {
        return Err(AnalysisError::NoBins);
    }
    let mut plot = BinPlot::default();
    for t in RoadType::ALL {
        let mine: Vec<&BinRow> = bins.iter().filter(|b| b.road_type == t).collect();
        if mine.is_empty() {
            continue;
        }
        let mut line = Vec::new();
        for b in mine {
            if !(b.crash_rate_mean > 0.0) {
                continue;
            }
            let y = b.crash_rate_mean.ln();
            if b.bin_index == 0 {
                plot.zero_points.push((t, (ZERO_BIN_X, y)));
            } else if b.hbe_rate_mean > 0.0 {
                line.push((b.hbe_rate_mean.ln(), y));
            }
        }
        plot.lines.push((t, line));
    }
    Ok(plot)
}

const COLORS: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

/// Render the plot as standalone SVG. `preamble` lines go into a leading comment.
pub fn render_svg(plot: &BinPlot, preamble: &[String]) -> String {
    let (w, h, m) = (640.0, 440.0, 60.0);
    let pts = plot
        .lines
        .iter()
        .flat_map(|(_, l)| l.iter().copied())
        .chain(plot.zero_points.iter().map(|(_, p)| *p));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    if !preamble.is_empty() {
        let body: Vec<String> = preamble.iter().map(|l| l.replace("--", "- -")).collect();
        let _ = writeln!(s, "<!--\n{}\n-->", body.join("\n"));
    }
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" fill="none"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">ln(HBE rate)  [{x0:.2}, {x1:.2}]</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">ln(crash rate)  [{y0:.2}, {y1:.2}]</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (t, line) in &plot.lines {
        let color = COLORS[t.index()];
        let coords: Vec<String> = line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-road-type="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            t.code(),
            coords.join(" ")
        );
    }
    for (t, (x, y)) in &plot.zero_points {
        let _ = writeln!(
            s,
            r#"<circle data-road-type="{}" data-bin="0" cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#,
            t.code(),
            sx(*x),
            sy(*y),
            COLORS[t.index()]
        );
    }
    for (k, t) in plot.lines.iter().map(|(t, _)| t).enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">Type {} ({})</text>"#,
            w - m - 170.0,
            m + 16.0 * k as f64,
            COLORS[t.index()],
            t.code(),
            t.label()
        );
    }
    s.push_str("</svg>\n");
    s
}
