//! Command-line front end: `detect`, `aggregate`, `fit`, `bins`, `summary`
//! and `simulate`.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical
//! non-convergence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aggregate::{build_analysis_table, JoinOptions};
use crate::analysis::{decile_bins, plot_geometry, render_svg, summarize_by_road_type};
use crate::detect::{detect_all, DetectorConfig};
use crate::formats::{self, FitSummary, Manifest};
use crate::glm::{
    build_design, dispersion_check, fit_negbin, fit_poisson, wald_inference, FitOptions, FitResult, HbeTransform,
    ModelSpec, Predictor,
};
use crate::ingest::{parse_crashes, parse_date, parse_segments, parse_telemetry, DateWindow, IngestReport};
use crate::model::AnalysisRow;
use crate::par;
use crate::synth::{self, GenConfig, Preset, GEN_KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

const DETECT_KEYS: [&str; 3] = ["decel_threshold", "min_event_gap", "max_sample_gap"];
const JOIN_KEYS: [&str; 3] = ["zero_fill_crashes", "window_start", "window_end"];
const FIT_KEYS: [&str; 5] = ["family", "hbe_transform", "predictors", "tol", "max_iter"];

#[derive(Debug, Parser)]
#[command(name = "hbe", version, about = "Hard-braking events as a crash surrogate for road segments")]
pub struct Cli {
    /// Worker threads for data-parallel steps.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Random seed (used by `simulate`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Also write the run manifest to this file.
    #[arg(long, global = true)]
    pub manifest_out: Option<PathBuf>,
    /// `key = value` configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect hard-braking events and summarize them per segment.
    Detect(DetectArgs),
    /// Join segments, crashes and HBE summaries into the analysis table.
    Aggregate(AggregateArgs),
    /// Fit a Poisson or negative binomial crash model.
    Fit(FitArgs),
    /// Rank-bin crash rate against HBE rate per road type and plot it.
    Bins(BinsArgs),
    /// Per-road-type statistics of an analysis table.
    Summary(SummaryArgs),
    /// Generate a synthetic network with known coefficients.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub telemetry: PathBuf,
    /// Per-segment summary output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-event dump.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub decel_threshold: Option<f64>,
    #[arg(long)]
    pub min_event_gap: Option<f64>,
    #[arg(long)]
    pub max_sample_gap: Option<f64>,
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    #[arg(long)]
    pub segments: Option<PathBuf>,
    #[arg(long)]
    pub crashes: Option<PathBuf>,
    /// Per-segment HBE summary, as written by `detect`.
    #[arg(long)]
    pub hbe: Option<PathBuf>,
    /// Count segments with HBE data but no crash rows as zero-crash segments.
    #[arg(long)]
    pub zero_fill_crashes: bool,
    /// First crash date to count (YYYY-MM-DD).
    #[arg(long)]
    pub window_start: Option<String>,
    /// Last crash date to count (YYYY-MM-DD).
    #[arg(long)]
    pub window_end: Option<String>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub join: JoinArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyChoice {
    Auto,
    Poisson,
    Negbin,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Analysis table; alternatively give the join inputs.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    pub join: JoinArgs,
    #[arg(long, value_enum)]
    pub family: Option<FamilyChoice>,
    /// `identity` or `log1p_scaled`.
    #[arg(long)]
    pub hbe_transform: Option<String>,
    /// Comma-separated predictor keys.
    #[arg(long)]
    pub predictors: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Coefficient report; printed to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BinsArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out_table: PathBuf,
    #[arg(long)]
    pub out_plot: PathBuf,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Segments file, to report total length per road type.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Output file; printed to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// `va` or `ca`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n_segments: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Emit raw telemetry for this many leading segments.
    #[arg(long)]
    pub telemetry_segments: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Input(String),
    NonConvergence(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::NonConvergence(m) => m,
        }
    }
}

macro_rules! input_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_error_from!(
    crate::error::IngestError,
    crate::error::GlmError,
    crate::error::SynthError,
    crate::error::AnalysisError
);

type CliResult<T> = Result<T, CliError>;

/// Parsed `key = value` configuration.
#[derive(Debug, Default)]
struct Config {
    values: BTreeMap<String, String>,
    order: Vec<String>,
}

impl Config {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!("{}: line {}: expected key = value", path.display(), i + 1))
            })?;
            let k = k.trim().to_string();
            let known = [&GEN_KEYS[..], &DETECT_KEYS, &JOIN_KEYS, &FIT_KEYS].iter().any(|ks| ks.contains(&k.as_str()));
            if !known {
                return Err(CliError::Input(format!("{}: unknown config key {k}", path.display())));
            }
            if cfg.values.insert(k.clone(), v.trim().to_string()).is_none() {
                cfg.order.push(k);
            }
        }
        Ok(cfg)
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::Input(format!("invalid config field {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// Flag value if given, else the config value.
    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: Config,
    out: &'a mut (dyn Write + Send),
    err: &'a mut (dyn Write + Send),
}

impl Ctx<'_> {
    fn warn(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.err, "warning: {msg}");
    }

    fn report_rejections(&mut self, what: &str, report: &IngestReport) {
        if report.rejections.is_empty() {
            return;
        }
        self.warn(format!(
            "{what}: {} of {} rows rejected",
            report.rejections.len(),
            report.rows_read
        ));
        for (line, reason) in report.rejections.iter().take(10) {
            let _ = writeln!(self.err, "  line {line}: {reason}");
        }
    }

    fn manifest(&self, command: &str) -> CliResult<Manifest> {
        let mut m = Manifest::new(command);
        if let Some(seed) = self.cli.seed {
            m.push("seed", seed);
        }
        for k in &self.config.order {
            m.push(&format!("config.{k}"), &self.config.values[k]);
        }
        Ok(m)
    }

    fn write(&mut self, path: &Path, contents: &str) -> CliResult<()> {
        formats::write_output(path, contents)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
    }

    fn emit(&mut self, path: Option<&Path>, contents: &str) -> CliResult<()> {
        match path {
            Some(p) => self.write(p, contents),
            None => self
                .out
                .write_all(contents.as_bytes())
                .map_err(|e| CliError::Input(format!("cannot write output: {e}"))),
        }
    }

    fn finish(&mut self, manifest: &Manifest) -> CliResult<()> {
        if let Some(p) = self.cli.manifest_out.clone() {
            self.write(&p, &manifest.to_text())?;
        }
        Ok(())
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let config = match Config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            return e.code();
        }
    };
    if cli.threads == 0 {
        let _ = writeln!(err, "error: --threads must be >= 1");
        return EXIT_INPUT;
    }
    let threads = cli.threads;
    let mut ctx = Ctx {
        cli: &cli,
        config,
        out,
        err,
    };
    let result = par::with_threads(threads, || dispatch(&mut ctx));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {}", e.message());
            e.code()
        }
    }
}

fn dispatch(ctx: &mut Ctx<'_>) -> CliResult<()> {
    match &ctx.cli.command {
        Command::Detect(a) => cmd_detect(ctx, a),
        Command::Aggregate(a) => cmd_aggregate(ctx, a),
        Command::Fit(a) => cmd_fit(ctx, a),
        Command::Bins(a) => cmd_bins(ctx, a),
        Command::Summary(a) => cmd_summary(ctx, a),
        Command::Simulate(a) => cmd_simulate(ctx, a),
    }
}

fn cmd_detect(ctx: &mut Ctx<'_>, a: &DetectArgs) -> CliResult<()> {
    let defaults = DetectorConfig::default();
    let cfg = DetectorConfig {
        decel_threshold: ctx.config.pick(a.decel_threshold, "decel_threshold")?.unwrap_or(defaults.decel_threshold),
        min_event_gap: ctx.config.pick(a.min_event_gap, "min_event_gap")?.unwrap_or(defaults.min_event_gap),
        max_sample_gap: ctx.config.pick(a.max_sample_gap, "max_sample_gap")?.unwrap_or(defaults.max_sample_gap),
    };
    cfg.validate().map_err(CliError::Input)?;

    let mut manifest = ctx.manifest("detect")?;
    manifest.input("telemetry", &a.telemetry)?;
    manifest.push("decel_threshold", formats::num(cfg.decel_threshold));
    manifest.push("min_event_gap", formats::num(cfg.min_event_gap));
    manifest.push("max_sample_gap", formats::num(cfg.max_sample_gap));

    let (traces, report) = parse_telemetry(&a.telemetry)?;
    ctx.report_rejections("telemetry", &report);
    let (events, summaries) = detect_all(&traces, &cfg);

    let summary_text = formats::render_hbe_summary(&manifest, summaries.iter().map(|(k, v)| (k.as_str(), *v)));
    ctx.write(&a.out, &summary_text)?;
    if let Some(p) = &a.events {
        ctx.write(p, &formats::render_events(&manifest, &events))?;
    }
    let _ = writeln!(
        ctx.err,
        "detect: {} trips, {} events, {} segments",
        traces.len(),
        events.len(),
        summaries.len()
    );
    ctx.finish(&manifest)
}

fn window(ctx: &Ctx<'_>, j: &JoinArgs) -> CliResult<DateWindow> {
    let date = |flag: &Option<String>, key: &str, fallback: NaiveDate| -> CliResult<NaiveDate> {
        match ctx.config.pick(flag.clone(), key)? {
            Some(text) => parse_date(&text).ok_or_else(|| CliError::Input(format!("invalid {key}: {text:?}"))),
            None => Ok(fallback),
        }
    };
    let start = date(&j.window_start, "window_start", NaiveDate::MIN)?;
    let end = date(&j.window_end, "window_end", NaiveDate::MAX)?;
    Ok(DateWindow::new(start, end)?)
}

/// Read and join the three inputs, recording them in the manifest.
fn join_inputs(ctx: &mut Ctx<'_>, j: &JoinArgs, manifest: &mut Manifest) -> CliResult<Vec<AnalysisRow>> {
    let need = |p: &Option<PathBuf>, flag: &str| -> CliResult<PathBuf> {
        p.clone().ok_or_else(|| CliError::Input(format!("missing --{flag}")))
    };
    let segments_path = need(&j.segments, "segments")?;
    let crashes_path = need(&j.crashes, "crashes")?;
    let hbe_path = need(&j.hbe, "hbe")?;
    let window = window(ctx, j)?;
    let zero_fill = j.zero_fill_crashes || ctx.config.get::<bool>("zero_fill_crashes")?.unwrap_or(false);

    manifest.input("segments", &segments_path)?;
    manifest.input("crashes", &crashes_path)?;
    manifest.input("hbe", &hbe_path)?;
    manifest.push("window_start", window.start);
    manifest.push("window_end", window.end);
    manifest.push("zero_fill_crashes", zero_fill);

    let (segments, seg_report) = parse_segments(&segments_path)?;
    ctx.report_rejections("segments", &seg_report);
    let (crashes, crash_report) = parse_crashes(&crashes_path, window)?;
    ctx.report_rejections("crashes", &crash_report);
    let (hbe, hbe_report) = formats::parse_hbe_summary(&hbe_path)?;
    ctx.report_rejections("hbe summary", &hbe_report);

    let (rows, report) = build_analysis_table(
        &segments,
        &crashes,
        &hbe,
        JoinOptions {
            zero_fill_crashes: zero_fill,
        },
    );
    if !report.exclusions.is_empty() {
        ctx.warn(format!("{} segments excluded from the join", report.exclusions.len()));
    }
    if !report.unknown_segments.is_empty() {
        ctx.warn(format!(
            "{} crash/HBE segment ids match no segment",
            report.unknown_segments.len()
        ));
    }
    Ok(rows)
}

fn cmd_aggregate(ctx: &mut Ctx<'_>, a: &AggregateArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("aggregate")?;
    let rows = join_inputs(ctx, &a.join, &mut manifest)?;
    ctx.write(&a.out, &formats::render_analysis_table(&manifest, &rows))?;
    let _ = writeln!(ctx.err, "aggregate: {} rows", rows.len());
    ctx.finish(&manifest)
}

fn load_table(ctx: &mut Ctx<'_>, path: &Path, manifest: &mut Manifest) -> CliResult<Vec<AnalysisRow>> {
    manifest.input("table", path)?;
    let (rows, report) = formats::parse_analysis_table(path)?;
    ctx.report_rejections("analysis table", &report);
    Ok(rows)
}

/// Model options resolved from flags and config.
pub struct FitPlan {
    pub family: FamilyChoice,
    pub spec: ModelSpec,
    pub options: FitOptions,
}

/// Outcome of [`fit_with_plan`].
pub struct FitOutcome {
    pub fit: FitResult,
    pub summary: FitSummary,
}

/// Fit as the `fit` command does: `Auto` fits Poisson, checks the Pearson
/// ratio and refits a negative binomial model when it exceeds the threshold.
pub fn fit_with_plan(rows: &[AnalysisRow], plan: &FitPlan) -> Result<FitOutcome, crate::error::GlmError> {
    let design = build_design(rows, &plan.spec)?;
    let (fit, poisson_ratio) = match plan.family {
        FamilyChoice::Poisson => (fit_poisson(&design, &plan.options)?, None),
        FamilyChoice::Negbin => (fit_negbin(&design, &plan.options)?, None),
        FamilyChoice::Auto => {
            let pois = fit_poisson(&design, &plan.options)?;
            let (ratio, over) = dispersion_check(&pois, pois.n, pois.p)?;
            if over {
                (fit_negbin(&design, &plan.options)?, Some(ratio))
            } else {
                (pois, Some(ratio))
            }
        }
    };
    let mut summary = FitSummary::new(&fit, plan.spec.hbe_transform);
    if let Some(r) = poisson_ratio {
        summary.poisson_pearson_ratio = Some(r);
        summary.overdispersed = r > crate::glm::OVERDISPERSION_RATIO;
    }
    Ok(FitOutcome { fit, summary })
}

fn cmd_fit(ctx: &mut Ctx<'_>, a: &FitArgs) -> CliResult<()> {
    let family = match a.family {
        Some(f) => f,
        None => match ctx.config.values.get("family") {
            Some(v) => FamilyChoice::from_str(v, true)
                .map_err(|_| CliError::Input(format!("invalid config field family: {v:?}")))?,
            None => FamilyChoice::Auto,
        },
    };
    let transform: HbeTransform = match ctx.config.pick(a.hbe_transform.clone(), "hbe_transform")? {
        Some(t) => t.parse().map_err(CliError::Input)?,
        None => HbeTransform::Log1pScaled,
    };
    let predictors: Vec<Predictor> = match ctx.config.pick(a.predictors.clone(), "predictors")? {
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?,
        None => Predictor::ALL.to_vec(),
    };
    let spec = ModelSpec::new(predictors, transform)?;
    let mut options = FitOptions::default();
    if let Some(t) = ctx.config.pick(a.tol, "tol")? {
        options.tol = t;
    }
    if let Some(m) = ctx.config.pick(a.max_iter, "max_iter")? {
        options.max_iter = m;
    }

    let mut manifest = ctx.manifest("fit")?;
    let rows = match &a.table {
        Some(t) => load_table(ctx, t, &mut manifest)?,
        None => join_inputs(ctx, &a.join, &mut manifest)?,
    };
    manifest.push(
        "family_requested",
        family.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
    );
    manifest.push(
        "predictors",
        spec.predictors().iter().map(|p| p.key()).collect::<Vec<_>>().join(","),
    );
    manifest.push("hbe_transform", transform.key());
    manifest.push("tol", formats::num(options.tol));
    manifest.push("max_iter", options.max_iter);

    let plan = FitPlan {
        family,
        spec,
        options,
    };
    let outcome = fit_with_plan(&rows, &plan)?;
    let table = wald_inference(&outcome.fit)?;
    let report = formats::render_coef_report(&manifest, &outcome.summary, &table);
    ctx.emit(a.out.as_deref(), &report)?;
    for w in &outcome.summary.warnings {
        ctx.warn(w);
    }
    let s = &outcome.summary;
    let _ = writeln!(
        ctx.err,
        "fit: family={} n={} kappa={:.6} loglik={:.4} pearson_ratio={:.4}{}",
        s.family,
        s.n,
        s.kappa,
        s.log_likelihood,
        s.pearson_ratio,
        s.poisson_pearson_ratio
            .map(|r| format!(" poisson_pearson_ratio={r:.4}"))
            .unwrap_or_default()
    );
    ctx.finish(&manifest)?;
    if !outcome.fit.converged {
        return Err(CliError::NonConvergence(format!(
            "{} fit did not converge after {} iterations",
            s.family, s.iterations
        )));
    }
    Ok(())
}

fn cmd_bins(ctx: &mut Ctx<'_>, a: &BinsArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("bins")?;
    let rows = load_table(ctx, &a.table, &mut manifest)?;
    let binning = decile_bins(&rows);
    for (t, n) in &binning.skipped {
        ctx.warn(format!(
            "road type {t}: only {n} segments with positive HBE rate, class skipped"
        ));
    }
    let plot = plot_geometry(&binning.bins)?;
    ctx.write(&a.out_table, &formats::render_bins(&manifest, &binning.bins))?;
    ctx.write(&a.out_plot, &render_svg(&plot, &manifest.lines()))?;
    ctx.finish(&manifest)
}

fn cmd_summary(ctx: &mut Ctx<'_>, a: &SummaryArgs) -> CliResult<()> {
    let mut manifest = ctx.manifest("summary")?;
    let mut rows = load_table(ctx, &a.table, &mut manifest)?;
    if let Some(p) = &a.segments {
        manifest.input("segments", p)?;
        let (segments, report) = parse_segments(p)?;
        ctx.report_rejections("segments", &report);
        let lengths: BTreeMap<&str, f64> = segments.iter().map(|s| (s.segment_id.as_str(), s.length_miles)).collect();
        for r in &mut rows {
            r.length_miles = lengths.get(r.segment_id.as_str()).copied();
        }
    }
    let summary = summarize_by_road_type(&rows)?;
    ctx.emit(a.out.as_deref(), &formats::render_type_summary(&manifest, &summary))?;
    ctx.finish(&manifest)
}

/// Resolve the generator configuration: preset, then config file, then flags.
fn gen_config(ctx: &Ctx<'_>, a: &SimulateArgs) -> CliResult<GenConfig> {
    let preset_text = a.preset.clone().or_else(|| ctx.config.values.get("preset").cloned());
    let preset = match preset_text {
        Some(p) => p
            .parse::<Preset>()
            .map_err(|e| CliError::Input(format!("invalid config field preset: {e}")))?,
        None => Preset::Va,
    };
    let mut cfg = GenConfig::preset(preset);
    for k in &ctx.config.order {
        if GEN_KEYS.contains(&k.as_str()) {
            cfg.set(k, &ctx.config.values[k])?;
        }
    }
    if let Some(n) = a.n_segments {
        cfg.n_segments = n;
    }
    if let Some(k) = a.kappa {
        cfg.kappa_true = k;
    }
    if let Some(t) = a.telemetry_segments {
        cfg.telemetry_segments = t;
    }
    if let Some(s) = ctx.cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The files `simulate` writes, keyed by file name.
pub fn simulate_outputs(cfg: &GenConfig, manifest: &Manifest) -> Result<Vec<(&'static str, String)>, crate::error::SynthError> {
    let net = synth::generate_segments(cfg)?;
    let spec = cfg.model_spec();
    let counts = synth::sample_crashes(&net, &spec, &cfg.beta_true, cfg.kappa_true, cfg.seed)?;
    let window = DateWindow::years_from(cfg.window_start, cfg.observed_years)
        .map_err(|e| crate::error::SynthError::config("window_start", e.to_string()))?;
    let dates = par::map_indexed(counts.len(), |i| synth::crash_dates(cfg.seed, i, counts[i], &window));

    let mut files = vec![
        ("segments.csv", formats::render_segments(manifest, &net.segments)),
        (
            "crashes.csv",
            formats::render_crashes(
                manifest,
                net.segments
                    .iter()
                    .zip(&dates)
                    .flat_map(|(s, ds)| ds.iter().map(move |d| (s.segment_id.as_str(), *d))),
            ),
        ),
        (
            "hbe_summary.csv",
            formats::render_hbe_summary(
                manifest,
                net.segments.iter().zip(&net.hbe).map(|(s, h)| (s.segment_id.as_str(), *h)),
            ),
        ),
    ];
    if cfg.telemetry_segments > 0 {
        let k = cfg.telemetry_segments.min(net.segments.len());
        let traces = par::map_indexed(k, |i| {
            synth::synth_trip(&format!("trip{i:06}"), &net.segments[i].segment_id, net.hbe[i])
        });
        files.push(("telemetry.csv", formats::render_telemetry(manifest, &traces)));
    }
    Ok(files)
}

/// Manifest of a `simulate` run: the full generator configuration.
pub fn simulate_manifest(cfg: &GenConfig) -> Manifest {
    let mut m = Manifest::new("simulate");
    for line in cfg.to_text().lines() {
        if let Some((k, v)) = line.split_once('=') {
            m.push(&format!("gen.{}", k.trim()), v.trim());
        }
    }
    m
}

fn cmd_simulate(ctx: &mut Ctx<'_>, a: &SimulateArgs) -> CliResult<()> {
    let cfg = gen_config(ctx, a)?;
    let manifest = simulate_manifest(&cfg);
    let files = simulate_outputs(&cfg, &manifest)?;
    for (name, text) in &files {
        ctx.write(&a.out_dir.join(name), text)?;
    }
    let _ = writeln!(
        ctx.err,
        "simulate: {} segments, seed {}, written to {}",
        cfg.n_segments,
        cfg.seed,
        a.out_dir.display()
    );
    ctx.finish(&manifest)
}
