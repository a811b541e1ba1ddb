//! Output file formats, run manifests and atomic writes.
//!
//! Every CSV output starts with the run manifest as `# key=value` comment
//! lines, which all readers in this crate skip. Floats are written in their
//! shortest round-trip form (see [`num`]), so a write/read cycle is lossless.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::analysis::{BinRow, TypeSummary};
use crate::error::{IngestError, Rejection};
use crate::glm::{FitResult, HbeTransform, InferenceTable};
use crate::ingest::{open_file, IngestReport, Table};
use crate::model::{AnalysisRow, HbeEvent, HbeSummary, RawRecord, RoadSegment, RoadType, TripTrace, SEGMENT_FIELDS};

pub const ANALYSIS_FIELDS: [&str; 12] = [
    "segment_id",
    "exposure_mvmt",
    "crash_count",
    "crash_rate",
    "hbe_count",
    "hbe_distance_mi",
    "hbe_rate",
    "road_type",
    "num_lanes",
    "has_ramp",
    "lane_changes",
    "cum_turn_angle_deg",
];
pub const HBE_SUMMARY_FIELDS: [&str; 3] = ["segment_id", "hbe_count", "hbe_distance_mi"];
pub const EVENT_FIELDS: [&str; 4] = ["trip_id", "segment_id", "onset_time_s", "peak_decel_mps2"];
pub const BIN_FIELDS: [&str; 5] = ["road_type", "bin_index", "hbe_rate_mean", "crash_rate_mean", "n_segments"];
pub const COEF_FIELDS: [&str; 6] = ["name", "estimate", "std_error", "z", "p_value", "signif"];
pub const TYPE_SUMMARY_FIELDS: [&str; 6] = [
    "road_type",
    "n_segments",
    "total_length_mi",
    "total_crashes",
    "mean_crash_rate",
    "mean_hbe_rate",
];

/// Shortest round-trip text for a float, in exponent form outside
/// `[1e-5, 1e16)` so tiny p-values stay readable.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Ordered `key=value` provenance attached to every output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Manifest::default();
        m.push("tool", concat!("hbe ", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        let clean = |s: &str| s.replace(['\n', '\r'], " ");
        self.entries.push((clean(key), clean(&value.to_string())));
    }

    /// Record an input path together with the SHA-256 of its contents.
    pub fn input(&mut self, key: &str, path: &Path) -> Result<(), IngestError> {
        let digest = file_sha256(path)?;
        self.push(&format!("input.{key}"), path.display());
        self.push(&format!("input.{key}.sha256"), digest);
        Ok(())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn lines(&self) -> Vec<String> {
        self.entries.iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    /// The manifest as CSV comment lines.
    pub fn comment_block(&self) -> String {
        self.lines().iter().map(|l| format!("# {l}\n")).collect()
    }

    pub fn to_text(&self) -> String {
        self.lines().iter().map(|l| format!("{l}\n")).collect()
    }
}

pub fn file_sha256(path: &Path) -> Result<String, IngestError> {
    let mut file = open_file(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Write via a temporary file in the target directory and rename into place.
pub fn atomic_write(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

struct CsvOut {
    head: String,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    fn new(manifest: &Manifest, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self {
            head: manifest.comment_block(),
            writer,
        }
    }

    fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        let body = self.writer.into_inner().expect("in-memory flush");
        self.head + &String::from_utf8(body).expect("utf-8 fields")
    }
}

pub fn render_segments(manifest: &Manifest, segments: &[RoadSegment]) -> String {
    let mut out = CsvOut::new(manifest, &SEGMENT_FIELDS);
    for s in segments {
        out.row(s.csv_fields());
    }
    out.finish()
}

/// One row per crash: `segment_id,date`.
pub fn render_crashes<'a>(
    manifest: &Manifest,
    crashes: impl IntoIterator<Item = (&'a str, chrono::NaiveDate)>,
) -> String {
    let mut out = CsvOut::new(manifest, &crate::ingest::CRASH_FIELDS);
    for (id, date) in crashes {
        out.row([id.to_string(), date.format("%Y-%m-%d").to_string()]);
    }
    out.finish()
}

pub fn render_telemetry(manifest: &Manifest, traces: &[TripTrace]) -> String {
    let mut out = CsvOut::new(manifest, &crate::ingest::TELEMETRY_FIELDS);
    for t in traces {
        for s in &t.samples {
            out.row([
                t.trip_id.clone(),
                num(s.timestamp_s),
                num(s.speed_mps),
                s.segment_id.clone(),
            ]);
        }
    }
    out.finish()
}

pub fn render_hbe_summary<'a>(
    manifest: &Manifest,
    summaries: impl IntoIterator<Item = (&'a str, HbeSummary)>,
) -> String {
    let mut out = CsvOut::new(manifest, &HBE_SUMMARY_FIELDS);
    for (id, h) in summaries {
        out.row([id.to_string(), h.hbe_count.to_string(), num(h.hbe_distance_miles)]);
    }
    out.finish()
}

pub fn render_events(manifest: &Manifest, events: &[HbeEvent]) -> String {
    let mut out = CsvOut::new(manifest, &EVENT_FIELDS);
    for e in events {
        out.row([
            e.trip_id.clone(),
            e.segment_id.clone(),
            num(e.onset_time_s),
            num(e.peak_decel_mps2),
        ]);
    }
    out.finish()
}

pub fn render_analysis_table(manifest: &Manifest, rows: &[AnalysisRow]) -> String {
    let mut out = CsvOut::new(manifest, &ANALYSIS_FIELDS);
    for r in rows {
        out.row([
            r.segment_id.clone(),
            num(r.exposure_mvmt),
            r.crash_count.to_string(),
            num(r.crash_rate),
            r.hbe_count.to_string(),
            num(r.hbe_distance_miles),
            num(r.hbe_rate),
            r.road_type.to_string(),
            r.num_lanes.to_string(),
            u8::from(r.has_ramp).to_string(),
            r.lane_changes.to_string(),
            num(r.cum_turn_angle_deg),
        ]);
    }
    out.finish()
}

pub fn render_bins(manifest: &Manifest, bins: &[BinRow]) -> String {
    let mut out = CsvOut::new(manifest, &BIN_FIELDS);
    for b in bins {
        out.row([
            b.road_type.to_string(),
            b.bin_index.to_string(),
            num(b.hbe_rate_mean),
            num(b.crash_rate_mean),
            b.n_segments.to_string(),
        ]);
    }
    out.finish()
}

pub fn render_type_summary(manifest: &Manifest, rows: &[TypeSummary]) -> String {
    let mut out = CsvOut::new(manifest, &TYPE_SUMMARY_FIELDS);
    for r in rows {
        out.row([
            r.road_type.to_string(),
            r.n_segments.to_string(),
            r.total_length_miles.map_or_else(|| "NA".to_string(), |x| num(x)),
            r.total_crashes.to_string(),
            num(r.mean_crash_rate),
            num(r.mean_hbe_rate),
        ]);
    }
    out.finish()
}

/// Everything the coefficient report states besides the coefficient rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub family: String,
    pub kappa: f64,
    pub log_likelihood: f64,
    pub deviance: f64,
    pub pearson_ratio: f64,
    pub n: usize,
    pub p: usize,
    pub iterations: usize,
    pub converged: bool,
    pub hbe_transform: HbeTransform,
    /// Pearson ratio of the preliminary Poisson fit when the family was chosen automatically.
    pub poisson_pearson_ratio: Option<f64>,
    pub overdispersed: bool,
    pub jitter: Option<f64>,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn new(fit: &FitResult, hbe_transform: HbeTransform) -> Self {
        let ratio = fit.pearson_ratio();
        FitSummary {
            family: fit.family.to_string(),
            kappa: fit.kappa,
            log_likelihood: fit.log_likelihood,
            deviance: fit.deviance,
            pearson_ratio: ratio,
            n: fit.n,
            p: fit.p,
            iterations: fit.iterations,
            converged: fit.converged,
            hbe_transform,
            poisson_pearson_ratio: None,
            overdispersed: ratio > crate::glm::OVERDISPERSION_RATIO,
            jitter: fit.jitter,
            warnings: fit.warnings.clone(),
        }
    }

    fn lines(&self) -> Vec<String> {
        let mut v = vec![
            format!("family={}", self.family),
            format!("kappa={}", num(self.kappa)),
            format!("log_likelihood={}", num(self.log_likelihood)),
            format!("deviance={}", num(self.deviance)),
            format!("pearson_ratio={}", num(self.pearson_ratio)),
            format!("overdispersed={}", self.overdispersed),
            format!("n={}", self.n),
            format!("p={}", self.p),
            format!("iterations={}", self.iterations),
            format!("converged={}", self.converged),
            format!("hbe_transform={}", self.hbe_transform.key()),
        ];
        if let Some(r) = self.poisson_pearson_ratio {
            v.push(format!("poisson_pearson_ratio={}", num(r)));
        }
        if let Some(j) = self.jitter {
            v.push(format!("ridge_jitter={}", num(j)));
        }
        v.extend(self.warnings.iter().map(|w| format!("warning={}", w.replace('\n', " "))));
        v
    }
}

/// Coefficient rows, preceded by the manifest and the model summary as comments.
pub fn render_coef_report(manifest: &Manifest, summary: &FitSummary, table: &InferenceTable) -> String {
    let mut out = CsvOut::new(manifest, &COEF_FIELDS);
    for l in summary.lines() {
        out.head.push_str(&format!("# {l}\n"));
    }
    for r in &table.rows {
        out.row([
            r.name.clone(),
            num(r.estimate),
            num(r.std_error),
            num(r.z),
            num(r.p_value),
            r.signif.to_string(),
        ]);
    }
    out.finish()
}

/// `key=value` pairs from the leading comment block of a file written here.
pub fn read_comment_block(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map_while(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn parse_num<T: std::str::FromStr>(raw: &RawRecord, key: &str) -> Result<T, Rejection> {
    let text = raw.get(key).unwrap_or_default();
    text.parse()
        .map_err(|_| Rejection::new(format!("{key} is not a valid number: {text:?}")))
}

fn parse_analysis_row(raw: &RawRecord) -> Result<AnalysisRow, Rejection> {
    let segment_id = raw.get("segment_id").unwrap_or_default().to_string();
    if segment_id.is_empty() {
        return Err(Rejection::new("missing field segment_id"));
    }
    let finite = |key: &str| -> Result<f64, Rejection> {
        let v: f64 = parse_num(raw, key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Rejection::new(format!("{key} must be finite")))
        }
    };
    let code: u8 = parse_num(raw, "road_type").map_err(|_| Rejection::new("road_type must be 1..4"))?;
    let road_type = RoadType::from_code(code).ok_or_else(|| Rejection::new("road_type must be 1..4"))?;
    let has_ramp = match raw.get("has_ramp").unwrap_or_default() {
        "1" | "true" => true,
        "0" | "false" => false,
        other => return Err(Rejection::new(format!("has_ramp must be 0 or 1, got {other:?}"))),
    };
    Ok(AnalysisRow {
        exposure_mvmt: finite("exposure_mvmt")?,
        crash_count: parse_num(raw, "crash_count")?,
        crash_rate: finite("crash_rate")?,
        hbe_count: parse_num(raw, "hbe_count")?,
        hbe_distance_miles: finite("hbe_distance_mi")?,
        hbe_rate: finite("hbe_rate")?,
        road_type,
        num_lanes: parse_num(raw, "num_lanes")?,
        has_ramp,
        lane_changes: parse_num(raw, "lane_changes")?,
        cum_turn_angle_deg: finite("cum_turn_angle_deg")?,
        length_miles: None,
        segment_id,
    })
}

pub fn read_analysis_table<R: Read>(source: R, label: &str) -> Result<(Vec<AnalysisRow>, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mut rows = Vec::new();
    let Some(table) = Table::open(source, label, &ANALYSIS_FIELDS, &[])? else {
        return Ok((rows, report));
    };
    table.for_each(|line, raw| {
        report.rows_read += 1;
        match raw.and_then(|r| parse_analysis_row(&r)) {
            Ok(row) => {
                report.rows_accepted += 1;
                rows.push(row);
            }
            Err(e) => report.rejections.push((line, e.reason().to_string())),
        }
    })?;
    Ok((rows, report))
}

pub fn parse_analysis_table(path: &Path) -> Result<(Vec<AnalysisRow>, IngestReport), IngestError> {
    read_analysis_table(open_file(path)?, &path.display().to_string())
}

pub fn read_hbe_summary<R: Read>(
    source: R,
    label: &str,
) -> Result<(BTreeMap<String, HbeSummary>, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mut out = BTreeMap::new();
    let Some(table) = Table::open(source, label, &HBE_SUMMARY_FIELDS, &[])? else {
        return Ok((out, report));
    };
    table.for_each(|line, raw| {
        report.rows_read += 1;
        let parsed = raw.and_then(|r| {
            let id = r.get("segment_id").unwrap_or_default().to_string();
            if id.is_empty() {
                return Err(Rejection::new("missing field segment_id"));
            }
            let hbe_count: u64 = parse_num(&r, "hbe_count")?;
            let d: f64 = parse_num(&r, "hbe_distance_mi")?;
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Rejection::new("hbe_distance_mi must be >= 0"));
            }
            Ok((id, HbeSummary { hbe_count, hbe_distance_miles: d }))
        });
        match parsed {
            Ok((id, _)) if out.contains_key(&id) => report.rejections.push((line, "duplicate segment_id".into())),
            Ok((id, h)) => {
                report.rows_accepted += 1;
                out.insert(id, h);
            }
            Err(e) => report.rejections.push((line, e.reason().to_string())),
        }
    })?;
    Ok((out, report))
}

pub fn parse_hbe_summary(path: &Path) -> Result<(BTreeMap<String, HbeSummary>, IngestReport), IngestError> {
    read_hbe_summary(open_file(path)?, &path.display().to_string())
}

/// Write `contents` atomically, creating parent directories as needed.
pub fn write_output(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    atomic_write(path, contents.as_bytes())
}
