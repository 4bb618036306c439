//! `dish`: train kernel hash functions, encode features, query and evaluate
//! Hamming rankings, generate synthetic data and run the oracle checks.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 numeric, 4 verification failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dish_core::cbcd::{LambdaRule, LossKind};
use dish_core::codes::radius_search;
use dish_core::dataio::{self, make_synthetic, FeatureFormat, SyntheticConfig};
use dish_core::eval::{evaluate, GroundTruth};
use dish_core::trainer::{train_with_progress, TrainerConfig};
use dish_core::verify::{run_verify, VerifyConfig};
use dish_core::{Bandwidth, ErrorClass, KernelModel, PackedCodes};

#[derive(Parser, Debug)]
#[command(name = "dish", version, about = "Supervised binary hashing with discrete code learning")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn hash functions and database codes from labeled features.
    Train(TrainArgs),
    /// Compute codes for a feature file with a trained model.
    Encode(EncodeArgs),
    /// Hamming radius or top-k search of query codes against database codes.
    Query(QueryArgs),
    /// Retrieval metrics for query codes against database codes.
    Eval(EvalArgs),
    /// Write a Gaussian-mixture dataset split into database and queries.
    Synth(SynthArgs),
    /// Cross-check fast computations against brute-force references.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct FeatureInput {
    /// Feature file format: csv or raw-f32.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: FeatureFormat,
    /// Scale each feature row to unit l2 norm after loading.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    input: FeatureInput,
    #[arg(long, default_value_t = 32)]
    bits: usize,
    /// Outer rounds; 0 keeps the initialization.
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4, allow_negative_numbers = true)]
    nu: f64,
    /// Number of anchors (default: min(1000, n)).
    #[arg(long)]
    anchors: Option<usize>,
    /// RBF bandwidth: "auto" or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_bandwidth)]
    sigma: Bandwidth,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    similar_value: f64,
    /// Probability of flipping each regression target bit.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ridge: f64,
    /// squared, hinge or logistic.
    #[arg(long, default_value = "squared", value_parser = parse_loss)]
    loss: LossKind,
    /// Code solver shift: psd, scaled:<factor> or fixed:<value>.
    #[arg(long, default_value = "fixed:0", value_parser = parse_lambda)]
    lambda: LambdaRule<f64>,
    #[arg(long, default_value_t = 50)]
    max_inner: usize,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    codes_out: PathBuf,
    /// Write the training report here instead of stdout.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    input: FeatureInput,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Return every item within this Hamming distance.
    #[arg(long, conflicts_with = "top")]
    radius: Option<u32>,
    /// Return the k nearest items.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Database codes file.
    #[arg(long, conflicts_with_all = ["model", "db_features"])]
    db_codes: Option<PathBuf>,
    /// Query codes file.
    #[arg(long, conflicts_with_all = ["model", "query_features"])]
    query_codes: Option<PathBuf>,
    /// Model used to encode the feature files.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    db_features: Option<PathBuf>,
    #[arg(long, requires = "model")]
    query_features: Option<PathBuf>,
    #[command(flatten)]
    input: FeatureInput,
    #[arg(long)]
    db_labels: PathBuf,
    #[arg(long)]
    query_labels: PathBuf,
    /// Only the first N ranked items count toward average precision.
    #[arg(long)]
    map_cutoff: Option<usize>,
    /// Comma-separated k values for top-k precision.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    topk: Vec<usize>,
    /// Write the precision-recall curve as CSV.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 220)]
    per_class: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    /// Query rows per class (default: 10%).
    #[arg(long)]
    queries_per_class: Option<usize>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: FeatureFormat,
    /// Directory for db.features, db.labels, query.features, query.labels.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Largest size for the exhaustive checks (2..=14).
    #[arg(long, default_value_t = 12)]
    max_n: usize,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn parse_format(s: &str) -> Result<FeatureFormat, String> {
    s.parse().map_err(|e: dish_core::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: dish_core::Error| e.to_string())
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s == "auto" {
        return Ok(Bandwidth::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a positive number, got {s:?}")),
    }
}

fn parse_lambda(s: &str) -> Result<LambdaRule<f64>, String> {
    let value = |v: &str| match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("expected a non-negative number, got {v:?}")),
    };
    match s.split_once(':') {
        None if s == "psd" => Ok(LambdaRule::PsdBound),
        Some(("fixed", v)) => Ok(LambdaRule::Fixed(value(v)?)),
        Some(("scaled", v)) => Ok(LambdaRule::ScaledBound(value(v)?)),
        _ => Err(format!("expected psd, scaled:<factor> or fixed:<value>, got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Core(dish_core::Error),
    Verify(usize),
}

impl From<dish_core::Error> for Failure {
    fn from(e: dish_core::Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<(), Failure>;

fn with_path(path: &Path, e: dish_core::Error) -> Failure {
    match e {
        dish_core::Error::Io(io) => Failure::Core(dish_core::Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))),
        other => Failure::Core(other),
    }
}

fn load_features(path: &Path, input: &FeatureInput) -> Result<dish_core::FeatureMatrix, Failure> {
    dataio::load_features(path, input.format, input.normalize).map_err(|e| with_path(path, e))
}

fn load_labels(path: &Path) -> Result<dish_core::LabelVector, Failure> {
    dataio::load_labels(path).map_err(|e| with_path(path, e))
}

fn load_codes(path: &Path) -> Result<PackedCodes, Failure> {
    dataio::load_codes(path).map_err(|e| with_path(path, e))
}

fn load_model(path: &Path) -> Result<KernelModel, Failure> {
    dataio::load_model(path).map_err(|e| with_path(path, e))
}

fn write_text(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| with_path(p, e.into())),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Core(e.into())),
                _ => Ok(()),
            }
        }
    }
}

fn cmd_train(args: &TrainArgs, seed: u64, quiet: bool) -> CmdResult {
    let cfg = TrainerConfig {
        bits: args.bits,
        iters: args.iters,
        nu: args.nu,
        anchors: args.anchors,
        bandwidth: args.sigma,
        similar_value: args.similar_value,
        disturb_alpha: args.alpha,
        ridge: args.ridge,
        seed,
        loss: args.loss,
        lambda: args.lambda,
        max_inner: args.max_inner,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let x = load_features(&args.features, &args.input)?;
    let labels = load_labels(&args.labels)?;
    if !quiet {
        eprintln!("training on {} samples, {} dims, {} classes", x.n(), x.dim(), labels.classes());
    }
    let out = train_with_progress::<f64>(&x, &labels, &cfg, |p| {
        if !quiet {
            eprintln!("{p}");
        }
    })?;
    let (_, codes) = out.model.predict(&x)?;
    dataio::save_model(&args.model_out, &out.model).map_err(|e| with_path(&args.model_out, e))?;
    dataio::save_codes(&args.codes_out, &codes.pack()).map_err(|e| with_path(&args.codes_out, e))?;
    write_text(args.report_out.as_deref(), &out.report.to_text())
}

fn cmd_encode(args: &EncodeArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let x = load_features(&args.features, &args.input)?;
    let (_, codes) = model.predict(&x)?;
    dataio::save_codes(&args.out, &codes.pack()).map_err(|e| with_path(&args.out, e))?;
    Ok(())
}

fn cmd_query(args: &QueryArgs) -> CmdResult {
    if args.radius.is_none() && args.top.is_none() {
        return Err(Failure::Usage("one of --radius or --top is required".into()));
    }
    let db = load_codes(&args.db)?;
    let queries = load_codes(&args.queries)?;
    if db.bits() != queries.bits() {
        return Err(Failure::Core(dish_core::Error::Dimension(format!(
            "database codes have {} bits, queries have {}",
            db.bits(),
            queries.bits()
        ))));
    }
    let mut text = String::new();
    for qi in 0..queries.n() {
        let hits = match (args.radius, args.top) {
            (Some(radius), _) => radius_search(&db, queries.row(qi), radius)?,
            (None, Some(k)) => {
                let dist = db.distances(queries.row(qi))?;
                let mut order: Vec<usize> = (0..db.n()).collect();
                order.sort_by_key(|&i| (dist[i], i));
                order.truncate(k);
                order
            }
            (None, None) => unreachable!(),
        };
        let ids: Vec<String> = hits.iter().map(|i| i.to_string()).collect();
        text.push_str(&format!("{qi}\t{}\n", ids.join(" ")));
    }
    write_text(None, &text)
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    if args.topk.contains(&0) {
        return Err(Failure::Usage("top-k values must be positive".into()));
    }
    if args.map_cutoff == Some(0) {
        return Err(Failure::Usage("--map-cutoff must be positive".into()));
    }
    let codes_for = |codes: &Option<PathBuf>, features: &Option<PathBuf>, which: &str| -> Result<PackedCodes, Failure> {
        match (codes, features, &args.model) {
            (Some(path), None, _) => load_codes(path),
            (None, Some(path), Some(model)) => {
                let model = load_model(model)?;
                let x = load_features(path, &args.input)?;
                Ok(model.predict(&x)?.1.pack())
            }
            _ => Err(Failure::Usage(format!(
                "give either --{which}-codes or --model with --{which}-features"
            ))),
        }
    };
    let db = codes_for(&args.db_codes, &args.db_features, "db")?;
    let queries = codes_for(&args.query_codes, &args.query_features, "query")?;
    let truth = GroundTruth::new(load_labels(&args.query_labels)?, load_labels(&args.db_labels)?);
    let report = evaluate(&db, &queries, &truth, args.map_cutoff, &args.topk)?;
    if let Some(path) = &args.pr_csv {
        fs::write(path, report.pr_csv()).map_err(|e| with_path(path, e.into()))?;
    }
    write_text(None, &report.to_text())
}

fn cmd_synth(args: &SynthArgs, seed: u64, quiet: bool) -> CmdResult {
    let cfg = SyntheticConfig {
        classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        separation: args.separation,
        queries_per_class: args.queries_per_class,
        seed,
    };
    let data = make_synthetic(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    fs::create_dir_all(&args.out_dir).map_err(|e| with_path(&args.out_dir, e.into()))?;
    for (name, (x, labels)) in [("db", data.database()?), ("query", data.queries()?)] {
        let fpath = args.out_dir.join(format!("{name}.features"));
        let lpath = args.out_dir.join(format!("{name}.labels"));
        dataio::save_features(&fpath, &x, args.format).map_err(|e| with_path(&fpath, e))?;
        dataio::save_labels(&lpath, &labels).map_err(|e| with_path(&lpath, e))?;
        if !quiet {
            eprintln!("wrote {} rows to {}", x.n(), fpath.display());
        }
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, seed: u64) -> CmdResult {
    let cfg = VerifyConfig {
        max_n: args.max_n,
        instances: args.instances,
        seed,
        inject_fault: args.inject_fault,
    };
    let results = run_verify(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut text = String::new();
    for r in &results {
        text.push_str(&format!("{r}\n"));
    }
    write_text(None, &text)?;
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        failed => Err(Failure::Verify(failed)),
    }
}

fn run(cli: Cli) -> CmdResult {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Train(a) => cmd_train(a, cli.seed, cli.quiet),
        Command::Encode(a) => cmd_encode(a),
        Command::Query(a) => cmd_query(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a, cli.seed, cli.quiet),
        Command::Verify(a) => cmd_verify(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
        Err(Failure::Verify(failed)) => {
            eprintln!("verification failed: {failed} suite(s)");
            ExitCode::from(4)
        }
    }
}
