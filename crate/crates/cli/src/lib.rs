//! Command-line front end: convert files, fetch from FHIR servers, run the
//! latency benchmark, generate test corpora and launch the local service.
//!
//! Exit codes are 0 when every resource normalized, 2 when some failed, and
//! 1 for any error that prevented output.

pub mod bench;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fhirlens_core::corpus::{generate, CorpusError, CorpusSpec};
use fhirlens_core::export::{export_dataset, rate_text, ExportError, ExportFormat, RenderOptions};
use fhirlens_core::ingest::{fetch_endpoint, FetchOptions};
use fhirlens_core::normalize::{NormalizeError, TableKind};
use fhirlens_core::{load_local, normalize_batch, Dataset, IngestBatch, IngestError, TransformReport};
use fhirlens_service::{bind, port_from_env, run as serve_until, ServiceConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FATAL: u8 = 1;
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "fhirlens", version, about = "Local-first FHIR R4 toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a FHIR JSON file and export it as PDF, XLSX or CSV.
    Convert(ConvertArgs),
    /// Download resources from a FHIR server, following search pages.
    Fetch(FetchArgs),
    /// Time parsing, normalization, exports and series extraction.
    Bench(BenchArgs),
    /// Serve the HTTP API and web UI on the loopback interface.
    Serve(ServeArgs),
    /// Generate a synthetic bundle with a manifest of injected faults.
    Corpus(CorpusArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Pdf,
    Xlsx,
    Csv,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pdf => ExportFormat::Pdf,
            Format::Xlsx => ExportFormat::Xlsx,
            Format::Csv => ExportFormat::Csv,
        }
    }
}

fn parse_kind(s: &str) -> Result<TableKind, String> {
    TableKind::parse(s).ok_or_else(|| format!("unknown table {s:?}; expected Patient, Observation, Encounter or DocumentReference"))
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Table written by CSV exports. Defaults to the first non-empty one.
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<TableKind>,
    /// Stamp the report with 1970-01-01T00:00:00Z for reproducible bytes.
    #[arg(long)]
    pub fixed_timestamp: bool,
    /// Compress XLSX parts.
    #[arg(long)]
    pub deflate: bool,
}

impl RenderArgs {
    fn options(&self) -> RenderOptions {
        let mut opts = if self.fixed_timestamp { RenderOptions::fixed() } else { RenderOptions::now() };
        opts.deflate = self.deflate;
        opts
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    /// Output format; inferred from the --out extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long)]
    pub base_url: String,
    /// Resource type to search, e.g. Patient.
    #[arg(long = "type")]
    pub resource_type: String,
    /// Read a single resource by id instead of searching.
    #[arg(long, conflicts_with = "query")]
    pub id: Option<String>,
    /// Search parameters, e.g. "_id=32298144&_count=50".
    #[arg(long, default_value = "")]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub max_pages: usize,
    /// Requested page size, sent as _count unless the query sets it.
    #[arg(long)]
    pub page_size: Option<u32>,
    /// Per-request timeout; defaults to FHIRLENS_TIMEOUT_MS or 30 s.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Export format. Without it the merged raw bundle is saved.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// FHIR JSON fixture. Defaults to a generated bundle of one patient and
    /// 200 observations.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = bench::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Untimed runs before measurement starts.
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP)]
    pub warmup: usize,
    /// Seed for the generated fixture.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port on 127.0.0.1; 0 picks a free one. Defaults to FHIRLENS_PORT or 7423.
    #[arg(long)]
    pub port: Option<u16>,
    /// Open the UI in the default browser.
    #[arg(long)]
    pub open: bool,
    /// Directory with the built web UI.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// JSON corpus spec. Without it, one patient and 200 observations.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Seed used when no spec is given.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error("{0}")]
    Usage(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_error(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_error(path))
}

/// Dataset label for a file: its name without directories, as the web
/// upload would report it.
pub fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Kind, attempted, succeeded and rate per resource kind, followed by the
/// failure count per category when there are failures.
pub fn report_table(report: &TransformReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:>9} {:>9} {:>8}", "kind", "attempted", "succeeded", "rate");
    for (kind, r) in &report.per_kind {
        let _ = writeln!(
            out,
            "{:<20} {:>9} {:>9} {:>8}",
            kind.name(),
            r.attempted,
            r.succeeded,
            rate_text(r.success_rate())
        );
    }
    let counts = report.category_counts();
    if !counts.is_empty() {
        let parts: Vec<String> = counts.iter().map(|(c, n)| format!("{} {n}", c.name())).collect();
        let _ = writeln!(out, "failures: {}", parts.join(", "));
    }
    if report.skipped_entries > 0 {
        let _ = writeln!(out, "skipped bundle entries: {}", report.skipped_entries);
    }
    out
}

fn status_for(report: &TransformReport) -> u8 {
    if report.all_succeeded() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn format_for(format: Option<Format>, out: &Path) -> Result<ExportFormat, CliError> {
    if let Some(f) = format {
        return Ok(f.into());
    }
    out.extension()
        .and_then(|e| e.to_str())
        .and_then(ExportFormat::parse)
        .ok_or_else(|| CliError::Usage(format!("cannot infer a format from {}; pass --format", out.display())))
}

fn export(batch: &IngestBatch, format: ExportFormat, render: &RenderArgs, out: &Path) -> Result<Dataset, CliError> {
    let dataset = normalize_batch(batch)?;
    let bytes = export_dataset(&dataset, format, render.kind, &render.options())?;
    write(out, &bytes)?;
    Ok(dataset)
}

fn convert(args: &ConvertArgs) -> Result<u8, CliError> {
    let format = format_for(args.format, &args.out)?;
    let input = read(&args.input)?;
    let batch = load_local(&input, &file_label(&args.input))?;
    let dataset = export(&batch, format, &args.render, &args.out)?;
    print!("{}", report_table(&dataset.report));
    Ok(status_for(&dataset.report))
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| CliError::Io { path: PathBuf::from("<runtime>"), source })
}

fn fetch(args: &FetchArgs) -> Result<u8, CliError> {
    let mut opts = FetchOptions {
        max_pages: args.max_pages,
        page_size_hint: args.page_size,
        ..FetchOptions::default()
    };
    if let Some(ms) = args.timeout_ms {
        opts.timeout_ms = ms;
    }
    let (path, query) = match &args.id {
        Some(id) => (format!("{}/{id}", args.resource_type.trim_end_matches('/')), ""),
        None => (args.resource_type.clone(), args.query.as_str()),
    };
    let batch = runtime()?.block_on(fetch_endpoint(&args.base_url, &path, query, &opts))?;
    println!(
        "fetched {} resource(s) in {} page(s){}",
        batch.resources.len(),
        batch.fetched_pages,
        if batch.truncated { ", stopped at the page limit" } else { "" }
    );
    match args.format {
        None => {
            write(&args.out, &batch.to_bundle_json())?;
            Ok(EXIT_OK)
        }
        Some(f) => {
            let dataset = export(&batch, f.into(), &args.render, &args.out)?;
            print!("{}", report_table(&dataset.report));
            Ok(status_for(&dataset.report))
        }
    }
}

fn bench_cmd(args: &BenchArgs) -> Result<u8, CliError> {
    let (input, name) = match &args.input {
        Some(path) => (read(path)?, file_label(path)),
        None => (generate(&CorpusSpec::bench_default(args.seed))?.bundle, "bench.json".to_owned()),
    };
    let result = bench::run_bench(&input, &name, args.iterations, args.warmup)?;
    print!("{}", bench::render_table(&result));
    Ok(EXIT_OK)
}

fn serve(args: &ServeArgs) -> Result<u8, CliError> {
    let port = args.port.unwrap_or_else(port_from_env);
    let config = ServiceConfig {
        ui_dir: args.ui_dir.clone(),
        ..ServiceConfig::default()
    };
    let rt = runtime()?;
    rt.block_on(async {
        let listener = bind(port).await.map_err(|e| {
            let what = if e.kind() == std::io::ErrorKind::AddrInUse {
                format!("port {port} is already in use (AddrInUse)")
            } else {
                format!("cannot bind 127.0.0.1:{port}: {e}")
            };
            CliError::Usage(what)
        })?;
        let addr = listener.local_addr().map_err(io_error(Path::new("<socket>")))?;
        let url = format!("http://{addr}");
        println!("{url}");
        let _ = std::io::stdout().flush();
        if args.open {
            if let Err(e) = open::that_detached(&url) {
                eprintln!("warning: could not open a browser: {e}");
            }
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve_until(listener, config, shutdown)
            .await
            .map_err(io_error(Path::new("<socket>")))
    })?;
    Ok(EXIT_OK)
}

fn corpus(args: &CorpusArgs) -> Result<u8, CliError> {
    let spec = match &args.spec {
        Some(path) => CorpusSpec::from_json(&read(path)?)?,
        None => CorpusSpec::bench_default(args.seed),
    };
    let corpus = generate(&spec)?;
    write(&args.out, &corpus.bundle)?;
    if let Some(path) = &args.manifest {
        write(path, &corpus.manifest.to_json())?;
    }
    println!(
        "wrote {} resource(s), {} injected fault(s)",
        corpus.manifest.total_resources,
        corpus.manifest.injected.len()
    );
    Ok(EXIT_OK)
}

/// Runs one command and maps its outcome to a process exit code. Errors
/// go to stderr.
pub fn run(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Fetch(a) => fetch(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Serve(a) => serve(a),
        Command::Corpus(a) => corpus(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FATAL)
        }
    }
}
