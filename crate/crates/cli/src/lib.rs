//! The `datavalue` command line: reads a dataset, queries and a payout
//! specification, and writes a JSON value report.

pub mod error;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use datavalue::coalition::CoalitionStructure;
use datavalue::freq_owen::owen_frequency_report;
use datavalue::freq_shapley::shapley_frequency_report;
use datavalue::knn_owen::knn_owen_report;
use datavalue::knn_shapley::{knn_shapley_report, KnnConfig};
use datavalue::oracle::{frequency_game, knn_game, oracle_report, Guard, OracleMethod};
use datavalue::{Dataset, Euclidean, FrequencyValueFunction, NumericMode, OutcomeValues, ReportOptions, ValueReport};

pub use error::{CliError, Result};
use io::DataMode;

#[derive(Debug, Parser)]
#[command(name = "datavalue", version, about = "Exact Shapley and Owen data values")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shapley values for a frequency (binned) rule.
    ShapleyFreq(FreqArgs),
    /// Owen values for a frequency rule; needs coalitions.
    OwenFreq(FreqArgs),
    /// Shapley values for a k-NN classifier.
    ShapleyKnn(KnnArgs),
    /// Owen values for a k-NN classifier; needs coalitions.
    OwenKnn(KnnArgs),
    /// Brute-force reference values (small inputs only).
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Training examples (CSV).
    #[arg(long)]
    data: PathBuf,
    /// Queries (CSV).
    #[arg(long)]
    queries: PathBuf,
    /// `id,coalition` file; overrides the dataset's coalition column.
    #[arg(long)]
    coalitions: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the examples table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Keep the per-query breakdown in the report.
    #[arg(long)]
    per_query: bool,
}

#[derive(Debug, Args)]
struct FreqArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Value function (JSON).
    #[arg(long)]
    value: PathBuf,
    #[arg(long, value_enum, default_value_t = Numeric::Float)]
    numeric: Numeric,
}

#[derive(Debug, Args)]
struct KnnSettings {
    /// Number of neighbors; must be odd.
    #[arg(long)]
    k: usize,
    /// Outcome payouts `correct,wrong,none`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_outcome)]
    values: OutcomeValues,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
}

#[derive(Debug, Args)]
struct KnnArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knn: KnnSettings,
    #[arg(long, value_enum, default_value_t = Numeric::Float)]
    numeric: Numeric,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Value function for `--model freq` (JSON).
    #[arg(long, required_if_eq("model", "freq"))]
    value: Option<PathBuf>,
    /// Number of neighbors for `--model knn`; must be odd.
    #[arg(long, required_if_eq("model", "knn"))]
    k: Option<usize>,
    /// Outcome payouts `correct,wrong,none` for `--model knn`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_outcome, required_if_eq("model", "knn"))]
    values: Option<OutcomeValues>,
    #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
    metric: MetricArg,
    /// Join orders sampled by `mc-shapley`.
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest exact enumeration allowed; above 10 needs `--yes-i-know`.
    #[arg(long, default_value_t = 10)]
    max_n: usize,
    /// Lift the enumeration size limits.
    #[arg(long)]
    yes_i_know: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Numeric {
    Exact,
    Float,
}

impl From<Numeric> for NumericMode {
    fn from(n: Numeric) -> Self {
        match n {
            Numeric::Exact => NumericMode::Exact,
            Numeric::Float => NumericMode::Float,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    ExactShapley,
    ExactOwen,
    McShapley,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Freq,
    Knn,
}

fn parse_outcome(raw: &str) -> std::result::Result<OutcomeValues, String> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let [correct, wrong, none] = parts.as_slice() else {
        return Err(format!("expected three comma-separated numbers, got {raw:?}"));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| format!("{s:?} is not a number"));
    OutcomeValues::new(num(correct)?, num(wrong)?, num(none)?).map_err(|e| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command, writing its report.
pub fn execute(cli: Cli) -> Result<()> {
    let (report, common) = match cli.command {
        Command::ShapleyFreq(args) => (shapley_freq(&args)?, args.common),
        Command::OwenFreq(args) => (owen_freq(&args)?, args.common),
        Command::ShapleyKnn(args) => (shapley_knn(&args)?, args.common),
        Command::OwenKnn(args) => (owen_knn(&args)?, args.common),
        Command::Oracle(args) => (oracle(&args)?, args.common),
    };
    io::write_report(&report, common.out.as_deref())?;
    if let Some(path) = &common.csv {
        io::write_examples_csv(&report, path)?;
    }
    Ok(())
}

fn options(common: &CommonArgs, numeric: NumericMode) -> ReportOptions {
    ReportOptions { per_query: common.per_query, ..ReportOptions::with_numeric(numeric) }
}

/// The coalition structure from `--coalitions`, else from the dataset's
/// coalition column, else none.
fn optional_coalitions(common: &CommonArgs, dataset: &Dataset) -> Result<Option<CoalitionStructure>> {
    if let Some(path) = &common.coalitions {
        let members = io::parse_coalitions(path)?;
        return CoalitionStructure::new(dataset, members)
            .map(Some)
            .map_err(|e| CliError::input(path, e.to_string()));
    }
    if dataset.examples().iter().any(|e| e.coalition.is_some()) {
        return Ok(Some(CoalitionStructure::from_dataset(dataset)?));
    }
    Ok(None)
}

fn required_coalitions(common: &CommonArgs, dataset: &Dataset) -> Result<CoalitionStructure> {
    optional_coalitions(common, dataset)?.ok_or_else(|| {
        CliError::Usage("Owen values need coalitions: add a coalition column or pass --coalitions".into())
    })
}

fn shapley_freq(args: &FreqArgs) -> Result<ValueReport> {
    let dataset = io::parse_dataset(&args.common.data, DataMode::Frequency)?;
    let queries = io::parse_frequency_queries(&args.common.queries)?;
    let vf = io::parse_value_function(&args.value)?;
    let coalitions = optional_coalitions(&args.common, &dataset)?;
    let opts = options(&args.common, args.numeric.into());
    Ok(shapley_frequency_report(&dataset, &queries, &vf, coalitions.as_ref(), opts)?)
}

fn owen_freq(args: &FreqArgs) -> Result<ValueReport> {
    let dataset = io::parse_dataset(&args.common.data, DataMode::Frequency)?;
    let queries = io::parse_frequency_queries(&args.common.queries)?;
    let vf = io::parse_value_function(&args.value)?;
    let coalitions = required_coalitions(&args.common, &dataset)?;
    let opts = options(&args.common, args.numeric.into());
    Ok(owen_frequency_report(&dataset, &coalitions, &queries, &vf, opts)?)
}

fn knn_config(settings: &KnnSettings) -> Result<KnnConfig<'static>> {
    let MetricArg::Euclidean = settings.metric;
    Ok(KnnConfig::new(settings.k, settings.values, &Euclidean)?)
}

fn shapley_knn(args: &KnnArgs) -> Result<ValueReport> {
    let config = knn_config(&args.knn)?;
    let dataset = io::parse_dataset(&args.common.data, DataMode::Knn)?;
    let queries = io::parse_knn_queries(&args.common.queries)?;
    let coalitions = optional_coalitions(&args.common, &dataset)?;
    let opts = options(&args.common, args.numeric.into());
    Ok(knn_shapley_report(&dataset, &queries, &config, coalitions.as_ref(), opts)?)
}

fn owen_knn(args: &KnnArgs) -> Result<ValueReport> {
    let config = knn_config(&args.knn)?;
    let dataset = io::parse_dataset(&args.common.data, DataMode::Knn)?;
    let queries = io::parse_knn_queries(&args.common.queries)?;
    let coalitions = required_coalitions(&args.common, &dataset)?;
    let opts = options(&args.common, args.numeric.into());
    Ok(knn_owen_report(&dataset, &coalitions, &queries, &config, opts)?)
}

fn oracle_guard(args: &OracleArgs) -> Result<Guard> {
    let default = Guard::default();
    if args.yes_i_know {
        return Ok(Guard { max_players: args.max_n, ..Guard::overridden() });
    }
    if args.max_n > default.max_players {
        return Err(datavalue::Error::GuardExceeded(format!(
            "--max-n {} exceeds {} without --yes-i-know",
            args.max_n, default.max_players
        ))
        .into());
    }
    Ok(Guard { max_players: args.max_n, ..default })
}

fn oracle(args: &OracleArgs) -> Result<ValueReport> {
    let guard = oracle_guard(args)?;
    let method = match args.method {
        MethodArg::ExactShapley => OracleMethod::ExactShapley,
        MethodArg::ExactOwen => OracleMethod::ExactOwen,
        MethodArg::McShapley => OracleMethod::McShapley { samples: args.samples, seed: args.seed },
    };
    let opts = options(&args.common, NumericMode::Exact);
    match args.model {
        ModelArg::Freq => {
            let dataset = io::parse_dataset(&args.common.data, DataMode::Frequency)?;
            let coalitions = oracle_coalitions(args, &dataset, method)?;
            let queries = io::parse_frequency_queries(&args.common.queries)?;
            let vf = load_value(args.value.as_deref())?;
            dataset.check_query_labels(queries.iter().map(|q| &q.label))?;
            let games = queries
                .iter()
                .map(|q| frequency_game(&dataset, std::slice::from_ref(q), &vf))
                .collect::<datavalue::Result<Vec<_>>>()?;
            Ok(oracle_report(&dataset, &games, coalitions.as_ref(), method, guard, opts, None)?)
        }
        ModelArg::Knn => {
            let (k, outcome) = match (args.k, args.values) {
                (Some(k), Some(v)) => (k, v),
                _ => return Err(CliError::Usage("--model knn needs --k and --values".into())),
            };
            let MetricArg::Euclidean = args.metric;
            datavalue::model::check_k(k)?;
            let dataset = io::parse_dataset(&args.common.data, DataMode::Knn)?;
            let coalitions = oracle_coalitions(args, &dataset, method)?;
            let queries = io::parse_knn_queries(&args.common.queries)?;
            let dim = dataset.feature_dimension()?;
            if let Some(q) = queries.iter().find(|q| q.features.len() != dim) {
                return Err(datavalue::Error::DimensionMismatch { expected: dim, found: q.features.len() }.into());
            }
            dataset.check_query_labels(queries.iter().map(|q| &q.label))?;
            let games = queries
                .iter()
                .map(|q| knn_game(&dataset, std::slice::from_ref(q), k, outcome, &Euclidean))
                .collect::<datavalue::Result<Vec<_>>>()?;
            Ok(oracle_report(&dataset, &games, coalitions.as_ref(), method, guard, opts, Some(k))?)
        }
    }
}

fn oracle_coalitions(
    args: &OracleArgs,
    dataset: &Dataset,
    method: OracleMethod,
) -> Result<Option<CoalitionStructure>> {
    match method {
        OracleMethod::ExactOwen => required_coalitions(&args.common, dataset).map(Some),
        _ => optional_coalitions(&args.common, dataset),
    }
}

fn load_value(path: Option<&Path>) -> Result<FrequencyValueFunction> {
    let path = path.ok_or_else(|| CliError::Usage("--model freq needs --value".into()))?;
    io::parse_value_function(path)
}
