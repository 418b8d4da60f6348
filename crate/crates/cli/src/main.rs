use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use effindex::ingest::{load_corpus, parse_log, Corpus};
use effindex::labels::{render_label, render_label_batch, LabelSpec};
use effindex::measure::{
    measure_run, EnergySource, MockEnergySource, PowercapSource, UnavailableSource,
    DEFAULT_POWERCAP_ROOT,
};
use effindex::pipeline::{rate_records, RatingRun, SCHEME_ENV};
use effindex::rating::{MedianTie, ReferenceEntry, SchemeSpec};
use effindex::report::{export_report, to_canonical_json, ReportFormat};
use effindex::{default_registry, Configuration, Environment, MetricRegistry};
use effindex_server::{router, serve, AppState, RouterOptions};

#[derive(Debug, Parser)]
#[command(name = "effindex", version, about = "Efficiency index ratings for ML experiment logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate a corpus of logs and write the report bundle.
    Rate(RateArgs),
    /// Render energy labels for rated experiments.
    Label(LabelArgs),
    /// Run a command and record its running time, power draw and peak memory.
    Measure(MeasureArgs),
    /// Serve the HTTP API over a corpus.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Log files or directories (searched recursively for .json and .jsonl).
    #[arg(long = "logs", required = true, num_args = 1..)]
    logs: Vec<PathBuf>,
    /// Metric registry in TOML; defaults to the built-in eight metrics.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SchemeArgs {
    /// Scheme file (TOML).
    #[arg(long, env = SCHEME_ENV)]
    scheme: Option<PathBuf>,
    /// `auto`, `none` or an experiment id; repeatable.
    #[arg(long = "reference", value_name = "auto|none|ID")]
    references: Vec<String>,
    /// Raw weight overrides, `key=value[,key=value…]`; repeatable.
    #[arg(long = "weights", value_parser = parse_weights, value_name = "KEY=W,…")]
    weights: Vec<Vec<(String, f64)>>,
    /// Four decreasing bin boundaries, `b1,b2,b3,b4`.
    #[arg(long, value_parser = parse_bins, value_name = "B1,B2,B3,B4")]
    bins: Option<[f64; 4]>,
    /// Median tie rule.
    #[arg(long, value_parser = parse_median, value_name = "lower|upper")]
    median: Option<MedianTie>,
}

#[derive(Debug, Args)]
struct RateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Output file (json) or directory (csv). JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["experiment", "all"]))]
struct LabelArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Experiment id to render.
    #[arg(long)]
    experiment: Option<String>,
    /// Render every experiment into the `--out` directory.
    #[arg(long, requires = "out")]
    all: bool,
    /// Output file (single label, stdout when omitted) or directory (`--all`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeasureArgs {
    #[arg(long, default_value_t = 100)]
    interval_ms: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Existing log to merge the measured metrics into.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "measured")]
    id: String,
    #[arg(long, default_value = "inference")]
    task: String,
    #[arg(long, default_value = "unknown")]
    dataset: String,
    #[arg(long, default_value = "unknown")]
    method: String,
    #[arg(long, default_value = "local")]
    env_id: String,
    /// Power-capping sysfs root.
    #[arg(long, default_value = DEFAULT_POWERCAP_ROOT)]
    powercap_root: PathBuf,
    /// Use a synthetic constant-power counter instead of the host's.
    #[arg(long, value_name = "WATTS")]
    mock_watts: Option<f64>,
    /// Command and arguments.
    #[arg(last = true, required = true, num_args = 1..)]
    command: Vec<String>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Log files or directories to serve.
    #[arg(long = "corpus", required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, env = SCHEME_ENV)]
    scheme: Option<PathBuf>,
    /// Allowed CORS origin; repeatable. Any origin when omitted.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    /// Built explorer assets to serve at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

/// A failure after argument parsing; always exit status 1.
#[derive(Debug)]
struct Failure(String);

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn fail(e: impl fmt::Display) -> Failure {
    Failure(e.to_string())
}

fn parse_weights(s: &str) -> Result<Vec<(String, f64)>, String> {
    s.split(',')
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{pair}`"))?;
            let w: f64 = v.trim().parse().map_err(|_| format!("invalid weight `{v}`"))?;
            Ok((k.trim().to_owned(), w))
        })
        .collect()
}

fn parse_bins(s: &str) -> Result<[f64; 4], String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("invalid boundary `{v}`")))
        .collect::<Result<Vec<_>, _>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 4 boundaries, got {}", v.len()))
}

fn parse_median(s: &str) -> Result<MedianTie, String> {
    match s {
        "lower" => Ok(MedianTie::Lower),
        "upper" => Ok(MedianTie::Upper),
        _ => Err(format!("expected lower or upper, got `{s}`")),
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: effindex::report::ReportError| e.to_string())
}

fn load_registry(path: Option<&Path>) -> Result<MetricRegistry, Failure> {
    match path {
        Some(p) => MetricRegistry::from_path(p).map_err(fail),
        None => Ok(default_registry()),
    }
}

fn load(paths: &[PathBuf], registry: &MetricRegistry) -> Result<Corpus, Failure> {
    let corpus = load_corpus(paths, registry).map_err(fail)?;
    for (path, e) in &corpus.errors {
        eprintln!("warning: skipped {}: {e}", path.display());
    }
    Ok(corpus)
}

fn scheme_spec(file: Option<&Path>, args: &SchemeArgs) -> Result<SchemeSpec, Failure> {
    let base = match file {
        Some(p) => SchemeSpec::from_path(p).map_err(Failure)?,
        None => SchemeSpec::default(),
    };
    let mut cli = SchemeSpec {
        bins: args.bins,
        median: args.median,
        ..SchemeSpec::default()
    };
    if !args.weights.is_empty() {
        cli.weights = Some(args.weights.iter().flatten().cloned().collect());
    }
    let mut refs = Vec::new();
    for r in &args.references {
        match r.as_str() {
            "auto" => cli.auto_reference = Some(true),
            "none" => cli.auto_reference = Some(false),
            id => refs.push(ReferenceEntry::for_id(id)),
        }
    }
    if !refs.is_empty() {
        cli.references = Some(refs);
    }
    Ok(base.merged(&cli))
}

fn rate_corpus_args(corpus: &CorpusArgs, scheme: &SchemeArgs) -> Result<RatingRun, Failure> {
    let registry = load_registry(corpus.metrics.as_deref())?;
    let loaded = load(&corpus.logs, &registry)?;
    let spec = scheme_spec(scheme.scheme.as_deref(), scheme)?;
    rate_records(&loaded.records, &registry, &spec).map_err(fail)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .map_err(|e| fail(format_args!("{}: {e}", parent.display())))?;
            }
            fs::write(path, text).map_err(|e| fail(format_args!("{}: {e}", path.display())))
        }
        None => io::stdout().write_all(text.as_bytes()).map_err(fail),
    }
}

fn rate(args: RateArgs) -> Result<(), Failure> {
    if args.format == ReportFormat::Csv && args.out.is_none() {
        usage_error("--format csv requires --out <DIR>");
    }
    let run = rate_corpus_args(&args.corpus, &args.scheme)?;
    match &args.out {
        Some(out) => {
            let written = export_report(&run.bundle, args.format, out).map_err(fail)?;
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        None => write_output(None, &to_canonical_json(&run.bundle)),
    }
}

fn label(args: LabelArgs) -> Result<(), Failure> {
    let run = rate_corpus_args(&args.corpus, &args.scheme)?;
    let registry = run.scheme.registry();
    if args.all {
        let dir = args.out.as_deref().expect("clap requires --out with --all");
        let manifest =
            render_label_batch(&run.bundle.experiments, registry, dir).map_err(fail)?;
        eprintln!("wrote {} labels to {}", manifest.labels.len(), dir.display());
        return Ok(());
    }
    let id = args.experiment.as_deref().expect("clap requires --experiment or --all");
    let rated = run
        .bundle
        .experiments
        .iter()
        .find(|r| r.id() == id)
        .ok_or_else(|| fail(format_args!("unknown experiment `{id}`")))?;
    let svg = render_label(&LabelSpec::new(rated.clone(), registry)).map_err(fail)?;
    write_output(args.out.as_deref(), &svg)
}

fn measure(args: MeasureArgs) -> Result<(), Failure> {
    let mut source: Box<dyn EnergySource> = match args.mock_watts {
        Some(w) => Box::new(MockEnergySource::constant_power(w, u64::MAX)),
        None => match PowercapSource::discover(&args.powercap_root) {
            Ok(s) => Box::new(s),
            Err(e) => {
                eprintln!("warning: {e}; energy metrics omitted");
                Box::new(UnavailableSource)
            }
        },
    };
    let interval = Duration::from_millis(args.interval_ms);
    let m = measure_run(&args.command, interval, source.as_mut()).map_err(fail)?;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    let doc = match &args.log {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| fail(format_args!("{}: {e}", path.display())))?;
            let mut doc = parse_log(&bytes).map_err(fail)?;
            m.merge_into(&mut doc);
            doc
        }
        None => m.to_log_document(
            &args.id,
            Configuration {
                task: args.task,
                dataset: args.dataset,
                method: args.method,
                hyperparameters: Default::default(),
                dataset_size: None,
            },
            Environment {
                id: args.env_id,
                hardware: String::new(),
                software: String::new(),
                energy_mix: None,
            },
        ),
    };
    write_output(args.out.as_deref(), &doc.to_json_pretty())
}

fn serve_cmd(args: ServeArgs) -> Result<(), Failure> {
    let registry = load_registry(args.metrics.as_deref())?;
    let corpus = load(&args.corpus, &registry)?;
    let spec = match &args.scheme {
        Some(p) => SchemeSpec::from_path(p).map_err(Failure)?,
        None => SchemeSpec::default(),
    };
    let state = AppState::new(corpus.records, registry, spec).map_err(fail)?;
    eprintln!(
        "serving {} experiments, default scheme {}",
        state.records().len(),
        state.default_hash()
    );
    let options = RouterOptions {
        cors_origins: args.cors_origins,
        static_dir: args.static_dir,
    };
    let app = router(Arc::new(state), &options).map_err(fail)?;
    let runtime = tokio::runtime::Runtime::new().map_err(fail)?;
    runtime.block_on(serve(args.addr, app)).map_err(fail)
}

fn usage_error(message: &str) -> ! {
    use clap::CommandFactory;
    Cli::command()
        .error(clap::error::ErrorKind::ArgumentConflict, message)
        .exit()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rate(a) => rate(a),
        Command::Label(a) => label(a),
        Command::Measure(a) => measure(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
