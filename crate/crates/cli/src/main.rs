//! Batch front end for balanced subsampling: select subsamples from CSV
//! files, inspect design quality, and run method-comparison simulations.
//!
//! Exit codes: 0 success, 1 usage error (bad or missing flags, invalid
//! configuration), 2 data error (unreadable or malformed input, indices out
//! of range, n > N), 3 simulation where every repetition of every method
//! was singular. All randomness flows from a single `--seed` flag with a
//! fixed default, so runs are reproducible by construction; reports embed
//! the fully resolved configuration.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use balsub::anova::{design_diagnostics, DesignDiagnostics};
use balsub::balance::{balance_stats, f_direct, is_orthogonal_array, Subsample};
use balsub::dataset::{ingest_csv, CsvSchema, LevelSpec, ResponseModel};
use balsub::evaluate::{
    run_experiment, write_records_csv, CovariateSource, ExperimentConfig, Method, MethodMetrics,
    WspeMode,
};
use balsub::selector::{balanced_select, uniform_select, SelectionConfig, TieRule};

/// Used whenever `--seed` is not given: fixed, documented, never wall-clock.
const DEFAULT_SEED: u64 = 42;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ALL_SINGULAR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "balsub",
    version,
    about = "Balanced subsampling of large categorical datasets",
    long_about = "Selects subsamples whose level and level-pair frequencies are as close to \
                  uniform as possible, which keeps ANOVA least-squares fits nonsingular and \
                  accurate at small subsample sizes. Also inspects design quality and runs \
                  seeded method-comparison simulations."
)]
struct Cli {
    /// Worker threads for parallel scans (default: all cores; 1 forces
    /// sequential execution)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a subsample from a CSV file and write its row indices
    Subsample(SubsampleArgs),
    /// Print design diagnostics for a dataset or an indexed subset as JSON
    Inspect(InspectArgs),
    /// Run a seeded simulation comparing selection methods
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SubsampleArgs {
    /// Input CSV with a header row
    #[arg(long)]
    input: PathBuf,

    /// Subsample size
    #[arg(long)]
    n: usize,

    /// Selection method: balanced | uniform
    #[arg(long, value_parser = Method::from_str)]
    method: Method,

    /// Seed for the selection
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Write the selected indices here (default: stdout), one 0-based row
    /// index per line
    #[arg(long)]
    output: Option<PathBuf>,

    /// Write a JSON run report (balance criterion, orthogonal-array flag,
    /// timing, resolved configuration) here
    #[arg(long)]
    report: Option<PathBuf>,

    /// Write the extracted subsample rows as CSV here
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Comma-separated categorical column names, in model order
    /// (default: every column except --response)
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,

    /// Numeric response column name
    #[arg(long)]
    response: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// Input CSV with a header row
    #[arg(long)]
    input: PathBuf,

    /// Text file with one 0-based row index per line (default: all rows)
    #[arg(long)]
    indices: Option<PathBuf>,

    /// Comma-separated categorical column names, in model order
    /// (default: every column except --response)
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,

    /// Numeric response column name
    #[arg(long)]
    response: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Config file with one key=value per line ('#' comments allowed);
    /// explicit flags override file values
    #[arg(long)]
    config: Option<PathBuf>,

    /// Covariate generator: 1 (uniform levels), 2 (linearly weighted
    /// levels), 3 (discretized correlated normals)
    #[arg(long)]
    case: Option<u8>,

    /// External covariate CSV instead of a generated case; any response
    /// column is ignored (simulation draws its own responses)
    #[arg(long)]
    input: Option<PathBuf>,

    /// Full-data size for generated cases
    #[arg(long = "N")]
    n_full: Option<usize>,

    /// Comma-separated level counts, e.g. 2,3,4,5,6
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<u16>>,

    /// Covariate count; requires --levels and gives every covariate the
    /// same level count (alternative to --q)
    #[arg(long)]
    p: Option<usize>,

    /// Level count shared by all --p covariates
    #[arg(long)]
    levels: Option<u16>,

    /// Subsample size
    #[arg(long)]
    n: Option<usize>,

    /// Repetition count
    #[arg(long)]
    reps: Option<usize>,

    /// Comma-separated methods to compare: balanced,uniform
    #[arg(long, value_delimiter = ',', value_parser = Method::from_str)]
    methods: Option<Vec<Method>>,

    /// Master seed; every stream in the experiment derives from it
    #[arg(long)]
    seed: Option<u64>,

    /// Noise standard deviation of the response model
    #[arg(long)]
    sigma: Option<f64>,

    /// Worst-case prediction error mode: empirical | analytic | both
    #[arg(long, value_parser = WspeMode::from_str)]
    wspe: Option<WspeMode>,

    /// Output directory for report.json and records.csv
    #[arg(long)]
    out: PathBuf,

    /// Comma-separated categorical column names for --input
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,

    /// Response column of --input to exclude from the covariates
    #[arg(long)]
    response: Option<String>,
}

enum CliError {
    Usage(String),
    Data(String),
    AllSingular,
}

type CliResult<T> = Result<T, CliError>;

/// Invalid configurations are usage mistakes; everything else coming out of
/// the library concerns the data itself.
impl From<balsub::Error> for CliError {
    fn from(e: balsub::Error) -> Self {
        match e {
            balsub::Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn data_err(msg: impl Into<String>) -> CliError {
    CliError::Data(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(CliError::AllSingular) => {
            eprintln!("error: every repetition of every method produced a singular fit");
            ExitCode::from(EXIT_ALL_SINGULAR)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Subsample(args) => cmd_subsample(args, cli.threads),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

#[cfg(feature = "parallel")]
fn init_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(t) = threads else { return Ok(()) };
    if t == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(t)
        .build_global()
        .map_err(|e| usage(format!("cannot size the thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn init_threads(threads: Option<usize>) -> CliResult<()> {
    if threads == Some(0) {
        return Err(usage("--threads must be at least 1"));
    }
    // Sequential build: the flag is accepted for interface stability.
    Ok(())
}

/// Builds the ingestion schema; without explicit --categorical the header
/// supplies every column except the response.
fn resolve_schema(
    input: &Path,
    categorical: &[String],
    response: Option<&str>,
) -> CliResult<CsvSchema> {
    let with_path = |e: csv::Error| data_err(format!("{}: {e}", input.display()));
    let categorical = if categorical.is_empty() {
        let mut rdr = csv::Reader::from_path(input).map_err(with_path)?;
        rdr.headers()
            .map_err(with_path)?
            .iter()
            .filter(|h| response != Some(*h))
            .map(String::from)
            .collect()
    } else {
        categorical.to_vec()
    };
    Ok(CsvSchema {
        categorical,
        response: response.map(String::from),
    })
}

fn ingest(input: &Path, schema: &CsvSchema) -> CliResult<balsub::dataset::Dataset> {
    ingest_csv(input, schema).map_err(|e| data_err(format!("{}: {e}", input.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| data_err(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct SubsampleConfigEcho {
    input: String,
    #[serde(rename = "N")]
    n_full: usize,
    n: usize,
    method: Method,
    seed: u64,
    tie_rule: &'static str,
    parallel: bool,
    categorical: Vec<String>,
    response: Option<String>,
    output: Option<String>,
    csv: Option<String>,
}

/// Run report for `subsample`: resolved configuration plus the selection's
/// balance figures and timing. The timing field is the one part of any
/// output that is not byte-stable across runs.
#[derive(Serialize)]
struct SubsampleReport {
    config: SubsampleConfigEcho,
    f: f64,
    oa: bool,
    selection_ms: f64,
}

fn cmd_subsample(args: &SubsampleArgs, threads: Option<usize>) -> CliResult<()> {
    let schema = resolve_schema(&args.input, &args.categorical, args.response.as_deref())?;
    let data = ingest(&args.input, &schema)?;

    let mut config = SelectionConfig::new(args.n, args.seed);
    config.parallel = threads != Some(1);
    let started = Instant::now();
    let sub = match args.method {
        Method::Balanced => balanced_select(&data, &config)?,
        Method::Uniform => uniform_select(&data, &config)?,
    };
    let selection_ms = started.elapsed().as_secs_f64() * 1e3;

    let mut indices_text = String::with_capacity(sub.n() * 8);
    for &i in sub.indices() {
        indices_text.push_str(&i.to_string());
        indices_text.push('\n');
    }
    match &args.output {
        Some(path) => fs::write(path, &indices_text)?,
        None => io::stdout().write_all(indices_text.as_bytes())?,
    }

    if let Some(path) = &args.csv {
        let file = File::create(path)?;
        data.write_csv_rows(sub.indices(), BufWriter::new(file))?;
    }

    if let Some(path) = &args.report {
        let stats = balance_stats(&sub, data.spec())?;
        let report = SubsampleReport {
            config: SubsampleConfigEcho {
                input: args.input.display().to_string(),
                n_full: data.n_rows(),
                n: args.n,
                method: args.method,
                seed: args.seed,
                tie_rule: match config.tie_rule {
                    TieRule::LowestIndex => "lowest_index",
                    TieRule::SeededRandom => "seeded_random",
                },
                parallel: config.parallel,
                categorical: schema.categorical.clone(),
                response: schema.response.clone(),
                output: args.output.as_ref().map(|p| p.display().to_string()),
                csv: args.csv.as_ref().map(|p| p.display().to_string()),
            },
            f: f_direct(&stats, data.spec()),
            oa: is_orthogonal_array(&sub, data.spec())?,
            selection_ms,
        };
        write_json(path, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct InspectConfigEcho {
    input: String,
    indices: Option<String>,
    categorical: Vec<String>,
    response: Option<String>,
}

#[derive(Serialize)]
struct InspectReport {
    config: InspectConfigEcho,
    #[serde(flatten)]
    diagnostics: DesignDiagnostics,
}

fn read_indices(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut indices = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let index: usize = line.parse().map_err(|_| {
            data_err(format!(
                "indices file {}: line {} is not a row index: {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        indices.push(index);
    }
    if indices.is_empty() {
        return Err(data_err(format!(
            "indices file {} contains no indices",
            path.display()
        )));
    }
    Ok(indices)
}

fn cmd_inspect(args: &InspectArgs) -> CliResult<()> {
    let schema = resolve_schema(&args.input, &args.categorical, args.response.as_deref())?;
    let data = ingest(&args.input, &schema)?;
    let indices = match &args.indices {
        Some(path) => read_indices(path)?,
        None => (0..data.n_rows()).collect(),
    };
    let sub = Subsample::from_indices(&data, indices)?;
    let report = InspectReport {
        config: InspectConfigEcho {
            input: args.input.display().to_string(),
            indices: args.indices.as_ref().map(|p| p.display().to_string()),
            categorical: schema.categorical,
            response: schema.response,
        },
        diagnostics: design_diagnostics(&data, &sub)?,
    };
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| data_err(e.to_string()))?;
    text.push('\n');
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

const CONFIG_KEYS: [&str; 12] = [
    "case", "input", "N", "q", "p", "levels", "n", "reps", "methods", "seed", "sigma", "wspe",
];

/// Parses a flat key=value config file; '#' starts a comment line.
fn parse_config_file(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            usage(format!(
                "config {}: line {} is not key=value: {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(usage(format!(
                "config {}: unknown key {key:?} (known: {})",
                path.display(),
                CONFIG_KEYS.join(", ")
            )));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// `flag` wins over the config file; both absent yields `None`.
fn pick<T, F>(flag: Option<T>, file: Option<&String>, key: &str, parse: F) -> CliResult<Option<T>>
where
    F: FnOnce(&str) -> Result<T, String>,
{
    match (flag, file) {
        (Some(v), _) => Ok(Some(v)),
        (None, Some(s)) => parse(s)
            .map(Some)
            .map_err(|e| usage(format!("config value {key}={s:?}: {e}"))),
        (None, None) => Ok(None),
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|part| parse_num(part.trim())).collect()
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => HashMap::new(),
    };
    let get = |key: &str| file.get(key);

    let case = pick(args.case, get("case"), "case", parse_num::<u8>)?;
    let input = pick(
        args.input.clone(),
        get("input"),
        "input",
        |s| Ok(PathBuf::from(s)),
    )?;
    let n_full = pick(args.n_full, get("N"), "N", parse_num::<usize>)?;
    let q = pick(args.q.clone(), get("q"), "q", parse_list::<u16>)?;
    let p = pick(args.p, get("p"), "p", parse_num::<usize>)?;
    let levels = pick(args.levels, get("levels"), "levels", parse_num::<u16>)?;
    let n_sub = pick(args.n, get("n"), "n", parse_num::<usize>)?
        .ok_or_else(|| usage("--n is required"))?;
    let reps = pick(args.reps, get("reps"), "reps", parse_num::<usize>)?.unwrap_or(200);
    let methods = pick(args.methods.clone(), get("methods"), "methods", |s| {
        s.split(',')
            .map(|part| Method::from_str(part.trim()).map_err(|e| e.to_string()))
            .collect()
    })?
    .unwrap_or_else(|| vec![Method::Balanced, Method::Uniform]);
    let seed = pick(args.seed, get("seed"), "seed", parse_num::<u64>)?.unwrap_or(DEFAULT_SEED);
    let sigma = pick(args.sigma, get("sigma"), "sigma", parse_num::<f64>)?.unwrap_or(1.0);
    let wspe_mode = pick(args.wspe, get("wspe"), "wspe", |s| {
        WspeMode::from_str(s).map_err(|e| e.to_string())
    })?
    .unwrap_or(WspeMode::Both);

    let (source, spec, n_full, external) = match (case, input) {
        (Some(_), Some(_)) => {
            return Err(usage("--case and --input are mutually exclusive"));
        }
        (None, None) => {
            return Err(usage("one of --case or --input is required"));
        }
        (Some(c), None) => {
            let source = match c {
                1 => CovariateSource::Case1,
                2 => CovariateSource::Case2,
                3 => CovariateSource::Case3,
                other => return Err(usage(format!("--case must be 1, 2, or 3, got {other}"))),
            };
            let q = match (q, p, levels) {
                (Some(q), None, None) => q,
                (None, Some(p), Some(levels)) => vec![levels; p],
                (Some(_), _, _) => {
                    return Err(usage("--q conflicts with --p/--levels; give one form"));
                }
                _ => {
                    return Err(usage(
                        "generated cases need level counts: --q 2,3,4 or --p with --levels",
                    ));
                }
            };
            let spec = LevelSpec::new(q).map_err(|e| usage(e.to_string()))?;
            let n_full =
                n_full.ok_or_else(|| usage("--N is required for generated cases"))?;
            (source, spec, n_full, None)
        }
        (None, Some(path)) => {
            if q.is_some() || p.is_some() || levels.is_some() || n_full.is_some() {
                return Err(usage(
                    "--N/--q/--p/--levels come from the file when --input is used",
                ));
            }
            let schema = resolve_schema(&path, &args.categorical, args.response.as_deref())?;
            let data = ingest(&path, &schema)?;
            (
                CovariateSource::External,
                data.spec().clone(),
                data.n_rows(),
                Some(data),
            )
        }
    };

    let model = ResponseModel {
        beta: vec![1.0; spec.num_params()],
        sigma,
        seed,
    };
    let config = ExperimentConfig {
        source,
        n_full,
        spec,
        n_sub,
        reps,
        methods,
        model,
        seed,
        wspe_mode,
    };

    let report = run_experiment(&config, external.as_ref())?;

    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    let records = File::create(args.out.join("records.csv"))?;
    write_records_csv(&report, BufWriter::new(records))?;

    let mut stdout = io::stdout().lock();
    for metrics in &report.methods {
        writeln!(stdout, "{}", summary_line(metrics))?;
    }
    drop(stdout);

    if report.all_singular {
        return Err(CliError::AllSingular);
    }
    Ok(())
}

fn summary_line(m: &MethodMetrics) -> String {
    let mut line = format!(
        "{}: nonsingular {}/{} ({:.3})",
        m.method, m.nonsingular_count, m.reps, m.nonsingular_proportion
    );
    if m.all_singular {
        line.push_str(", every repetition singular");
        return line;
    }
    line.push_str(&format!(
        ", mse {:.6} (median {:.6})",
        m.mse, m.mse_median
    ));
    if let Some(w) = m.wspe_empirical {
        line.push_str(&format!(", wspe_empirical {w:.6}"));
    }
    if let Some(w) = m.wspe_analytic {
        line.push_str(&format!(", wspe_analytic {w:.6}"));
    }
    line
}
