//! `tvprior` command-line front end.
//!
//! Every failure is reported on stderr as one JSON object
//! `{"error": <category>, "message": <text>}` with an exit status fixed per
//! category (see [`exit_code`]).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "TVPRIOR_THREADS";

#[derive(Parser, Debug)]
#[command(name = "tvprior", version, about = "Sparse adaptive time-series priors for GLM coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset and its true coefficients.
    Generate(GenerateArgs),
    /// Fit one model with fixed hyperparameters and save it as JSON.
    Train(TrainArgs),
    /// Rolling-origin evaluation: tune on the development timestep, then
    /// train on everything before each test timestep and score it.
    Evaluate(EvaluateArgs),
    /// Write α histograms, coefficient trajectories and sparsity tables.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpecKind {
    Regression,
    Text,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Built-in specification to draw from.
    #[arg(long, value_enum, default_value = "regression")]
    kind: SpecKind,
    /// JSON generator specification; replaces --kind.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset output (line-delimited JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional table of the true coefficient trajectories.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SharingArg {
    Shared,
    PerWord,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Joint,
    Block,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Lasso,
    Zero,
}

/// Settings shared by `train` and `evaluate`; unset flags keep the defaults
/// (or the values from `--config`).
#[derive(Args, Debug, Default)]
struct FitFlags {
    #[arg(long, value_enum)]
    sharing: Option<SharingArg>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    /// Alternation rounds of the block schedule.
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Lasso weight of the adaptive model's starting point.
    #[arg(long, conflicts_with = "tune_init")]
    init_strength: Option<f64>,
    /// Tune the starting-point lasso weight on the development timestep.
    #[arg(long)]
    tune_init: bool,
    /// Keep groups that start at exactly zero out of the optimization.
    #[arg(long)]
    freeze_zero_groups: bool,
    /// Truncation C of the autocorrelation prior, in (0, 0.5).
    #[arg(long)]
    truncation: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// L-BFGS history length.
    #[arg(long)]
    memory: Option<usize>,
    /// Sparsity threshold ε.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// adaptive, ridge-one, ridge-all, ridge-ts, lasso-one or lasso-all.
    #[arg(long)]
    model: String,
    /// Train on timesteps 1..=THROUGH (default: all).
    #[arg(long)]
    through: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Ridge or lasso weight.
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    ts_alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    ts_lambda: f64,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON run configuration; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// Development timestep used for tuning.
    #[arg(long)]
    dev: Option<usize>,
    /// Comma-separated test timesteps.
    #[arg(long, value_delimiter = ',')]
    test: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    strength_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    ts_alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ts_lambda_grid: Option<Vec<f64>>,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    seed: Option<u64>,
    /// Receives report.json, metrics.tsv, manifest.json and model.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// report.json from `evaluate`; needed for the α histogram.
    #[arg(long)]
    report: Option<PathBuf>,
    /// model.json from `train` or `evaluate`; needed for trajectories and sparsity.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Feature-name pattern (`*` and `?`) for the trajectory table.
    #[arg(long, conflicts_with = "indices")]
    features: Option<String>,
    /// Comma-separated feature indices for the trajectory table.
    #[arg(long, value_delimiter = ',')]
    indices: Option<Vec<usize>>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Exit status per error category. Usage errors exit with 64.
fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 2,
        "parse" => 3,
        "validation" => 4,
        "empty-dataset" => 5,
        "input" => 6,
        "lookup" => 7,
        "domain" => 8,
        "dimension" => 9,
        "type" => 10,
        "io" => 11,
        "json" => 12,
        _ => 1,
    }
}

fn report_error(category: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": category, "message": message }));
    ExitCode::from(code)
}

fn init_threads() -> tvprior::Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| tvprior::Error::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| tvprior::Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            return report_error("usage", e.to_string().trim(), 64);
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Export(a) => commands::export(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(e.category(), &e.to_string(), exit_code(e.category())),
    }
}
