use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use rank_robustness::compare::compare_rankers;
use rank_robustness::io::{parse_svmlight, read_log_file, write_log_file, write_svmlight_file};
use rank_robustness::measures::{evaluate_ranking_robustness, MeasureConfig};
use rank_robustness::rankers::{
    fit_lambdamart_lite, fit_ranksvm, weight_norm, AnyRanker, LambdaMartConfig, RankSvmConfig, SavedRanker,
    TrainConfig,
};
use rank_robustness::rng::derive_seed;
use rank_robustness::robustness::{verify_linear_properties, VerifyConfig};
use rank_robustness::simulator::{balanced_ranker, simulate_competition, synthetic_training_set, SimConfig, TrainingSetConfig};
use rank_robustness::stats::{correlate_with, CorrelationMethod, PValueMethod};
use rank_robustness::sweep::{run_sweep, write_correlations_csv, write_report, ReportFormat, SweepResult, SweepSpec};
use rank_robustness::{Dataset, Log, MinMaxScaler};

/// Robustness of learning-to-rank functions under document manipulation.
#[derive(Parser)]
#[command(name = "rankrob", version)]
struct Cli {
    /// Master seed; overrides any seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON file with the subcommand's settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a ranker on an SVMlight dataset.
    Train(TrainArgs),
    /// Generate a synthetic ranking competition log.
    Simulate(SimulateArgs),
    /// Evaluate ranking robustness of a ranker on a competition log.
    Robustness(RobustnessArgs),
    /// Sweep a regularization grid and correlate it with robustness.
    Sweep(SweepArgs),
    /// Correlate two columns of a CSV file.
    Correlate(CorrelateArgs),
    /// Paired comparison of two rankers with Bonferroni correction.
    Compare(CompareArgs),
    /// Re-render a saved sweep result.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Ranksvm,
    Lambdamart,
}

#[derive(Args)]
struct TrainArgs {
    /// SVMlight training file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "ranksvm")]
    family: Family,
    /// RankSVM regularization constant.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    leaves: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fit min-max scaling on the training data; the saved ranker takes raw features.
    #[arg(long)]
    min_max_scale: bool,
    /// Output ranker JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output competition log (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Ranker JSON driving the competition; defaults to equal weight per feature range.
    #[arg(long)]
    driver: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    authors: Option<usize>,
    /// Mimic rate α in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise scale σ.
    #[arg(long)]
    sigma: Option<f64>,
    /// Also write a synthetic SVMlight training set from the same relevance model.
    #[arg(long)]
    training_out: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    training_queries: usize,
    #[arg(long, default_value_t = 12)]
    docs_per_query: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct RobustnessArgs {
    #[arg(long)]
    ranker: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    rbo_p: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: TableFormat,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// For linear rankers, also check the analytic robustness properties and write them here.
    #[arg(long)]
    verify_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory for observations.csv, correlations.csv, sweep.json and scatter.svg.
    #[arg(long)]
    out_dir: PathBuf,
    /// Exclude models with ‖w‖ at or above this value from the correlations.
    #[arg(long)]
    weight_norm_cap: Option<f64>,
    #[arg(long)]
    min_max_scale: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Spearman,
    Pearson,
    Kendall,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum PValueArg {
    Auto,
    Asymptotic,
    Permutation,
}

#[derive(Args)]
struct CorrelateArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    #[arg(long, value_enum, default_value = "all")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "auto")]
    p_value: PValueArg,
    /// Keep only rows where COLUMN equals VALUE (repeatable), e.g. `target=KT`.
    #[arg(long = "where", value_name = "COLUMN=VALUE")]
    filters: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    rbo_p: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormatArg {
    Json,
    Csv,
    Svg,
}

#[derive(Args)]
struct ReportArgs {
    /// `sweep.json` written by the sweep subcommand.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: ReportFormatArg,
    #[arg(long)]
    out: PathBuf,
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing JSON config {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))
    }
}

fn config_or_default<T: DeserializeOwned + Default>(cli: &Cli) -> Result<T> {
    cli.config.as_deref().map(load_config).transpose().map(Option::unwrap_or_default)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_ranker(path: &Path) -> Result<AnyRanker<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SavedRanker::<f64>::from_json(&text).with_context(|| format!("parsing ranker {}", path.display()))?.ranker)
}

fn load_log(path: &Path) -> Result<Log> {
    read_log_file(path).with_context(|| format!("reading competition log {}", path.display()))
}

fn measure_config(cli: &Cli, rbo_p: Option<f64>) -> Result<MeasureConfig> {
    let mut cfg: MeasureConfig = config_or_default(cli)?;
    if let Some(p) = rbo_p {
        cfg.rbo_p = p;
    }
    Ok(cfg)
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut config = match (&cli.config, args.family) {
        (Some(path), _) => load_config::<TrainConfig>(path)?,
        (None, Family::Ranksvm) => TrainConfig::RankSvm(RankSvmConfig::default()),
        (None, Family::Lambdamart) => TrainConfig::LambdaMart(LambdaMartConfig::default()),
    };
    match &mut config {
        TrainConfig::RankSvm(c) => {
            if let Some(v) = args.c {
                c.c = v;
            }
            if let Some(v) = args.epochs {
                c.epochs = v;
            }
            if let Some(s) = cli.seed {
                c.seed = s;
            }
        }
        TrainConfig::LambdaMart(c) => {
            if let Some(v) = args.leaves {
                c.num_leaves = v;
            }
            if let Some(v) = args.trees {
                c.num_trees = v;
            }
            if let Some(v) = args.learning_rate {
                c.learning_rate = v;
            }
            if let Some(s) = cli.seed {
                c.seed = s;
            }
        }
    }

    let raw: Dataset = parse_svmlight(&args.data, None).with_context(|| format!("reading {}", args.data.display()))?;
    let scaler = if args.min_max_scale { Some(MinMaxScaler::fit(&raw)?) } else { None };
    let data = match &scaler {
        Some(s) => s.transform_dataset(&raw)?,
        None => raw,
    };
    let mut ranker = match &config {
        TrainConfig::RankSvm(c) => AnyRanker::Linear(fit_ranksvm(&data.preference_pairs(), c)?.ranker),
        TrainConfig::LambdaMart(c) => AnyRanker::Trees(fit_lambdamart_lite(&data, c)?.ranker),
    };
    if let Some(s) = &scaler {
        ranker = ranker.fold_scaler(s)?;
    }
    match &ranker {
        AnyRanker::Linear(r) => log::info!("trained linear ranker, |w| = {}", weight_norm(r)),
        AnyRanker::Trees(r) => log::info!("trained {} trees", r.trees.len()),
    }
    let saved = SavedRanker::new(ranker, Some(config));
    fs::write(&args.out, saved.to_json()? + "\n").with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let mut sim: SimConfig = config_or_default(cli)?;
    if let Some(v) = args.queries {
        sim.num_queries = v;
    }
    if let Some(v) = args.rounds {
        sim.rounds = v;
    }
    if let Some(v) = args.authors {
        sim.authors_per_query = v;
    }
    if let Some(v) = args.alpha {
        sim.mimic_rate = v;
    }
    if let Some(v) = args.sigma {
        sim.noise_scale = v;
    }
    if let Some(s) = cli.seed {
        sim.seed = s;
    }
    let log: Log = match &args.driver {
        Some(p) => simulate_competition(&sim, &load_ranker(p)?)?,
        None => simulate_competition(&sim, &balanced_ranker::<f64>(&sim))?,
    };
    write_log_file(&log, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.training_out {
        let cfg = TrainingSetConfig {
            num_queries: args.training_queries,
            docs_per_query: args.docs_per_query,
            seed: derive_seed(sim.seed, 1),
            ..Default::default()
        };
        let ds: Dataset = synthetic_training_set(&sim, &cfg)?;
        write_svmlight_file(&ds, path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn robustness(cli: &Cli, args: &RobustnessArgs) -> Result<()> {
    let cfg = measure_config(cli, args.rbo_p)?;
    let ranker = load_ranker(&args.ranker)?;
    let log = load_log(&args.log)?;
    let report = evaluate_ranking_robustness(&ranker, &log, &cfg)?;
    for q in &report.excluded_queries {
        log::warn!("query {q} has no usable round pair");
    }
    let mut out = output(args.out.as_deref())?;
    match args.format {
        TableFormat::Json => writeln!(out, "{}", report.to_json()?)?,
        TableFormat::Csv => report.write_csv(&mut out)?,
    }
    out.flush()?;

    if let Some(path) = &args.verify_out {
        let AnyRanker::Linear(lin) = &ranker else {
            bail!("property verification applies to linear rankers only");
        };
        let vcfg = VerifyConfig { seed: cli.seed.unwrap_or(0), ..Default::default() };
        let rep = verify_linear_properties(lin, &vcfg)?;
        fs::write(path, serde_json::to_string_pretty(&rep)? + "\n")?;
    }
    Ok(())
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<ExitCode> {
    let Some(path) = &cli.config else {
        bail!("sweep needs --config <file> describing the grid and data");
    };
    let mut spec: SweepSpec = load_config(path)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if args.weight_norm_cap.is_some() {
        spec.weight_norm_cap = args.weight_norm_cap;
    }
    spec.min_max_scale |= args.min_max_scale;

    let result = run_sweep(&spec)?;
    fs::create_dir_all(&args.out_dir)?;
    let dir = &args.out_dir;
    write_report(&result, ReportFormat::Csv, output(Some(&dir.join("observations.csv")))?)?;
    write_report(&result, ReportFormat::Json, output(Some(&dir.join("sweep.json")))?)?;
    write_report(&result, ReportFormat::Svg, output(Some(&dir.join("scatter.svg")))?)?;
    write_correlations_csv(&result, output(Some(&dir.join("correlations.csv")))?)?;

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "{} points, {} failed", result.points.len(), result.failures())?;
    for row in result.correlations.iter().filter(|r| r.method == CorrelationMethod::Spearman) {
        match (row.coefficient, row.p_value) {
            (Some(c), Some(p)) => writeln!(stdout, "spearman({}, {}) = {c:+.3}  p = {p:.3e}", result.proxy_name, row.target)?,
            _ => writeln!(stdout, "spearman({}, {}) undefined", result.proxy_name, row.target)?,
        }
    }
    for (i, p) in result.points.iter().enumerate() {
        if let rank_robustness::sweep::PointStatus::Failed { error } = &p.status {
            log::error!("grid point {i} ({}) failed: {error}", p.label);
        }
    }
    Ok(if result.partial_failure() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn correlate_cmd(args: &CorrelateArgs) -> Result<()> {
    let mut reader = csv::Reader::from_path(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("no column `{name}`"));
    let (xi, yi) = (col(&args.x)?, col(&args.y)?);
    let filters = args
        .filters
        .iter()
        .map(|f| {
            let (k, v) = f.split_once('=').with_context(|| format!("filter `{f}` is not COLUMN=VALUE"))?;
            Ok((col(k)?, v.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if filters.iter().any(|(i, v)| rec.get(*i) != Some(v.as_str())) {
            continue;
        }
        let parse = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or_default();
            s.parse().with_context(|| format!("row {}: `{s}` is not a number", line + 2))
        };
        x.push(parse(xi)?);
        y.push(parse(yi)?);
    }
    let methods = match args.method {
        MethodArg::Spearman => vec![CorrelationMethod::Spearman],
        MethodArg::Pearson => vec![CorrelationMethod::Pearson],
        MethodArg::Kendall => vec![CorrelationMethod::Kendall],
        MethodArg::All => CorrelationMethod::ALL.to_vec(),
    };
    let pm = match args.p_value {
        PValueArg::Auto => PValueMethod::Auto,
        PValueArg::Asymptotic => PValueMethod::Asymptotic,
        PValueArg::Permutation => PValueMethod::Permutation,
    };
    let mut out = io::stdout().lock();
    for m in methods {
        writeln!(out, "{}", serde_json::to_string(&correlate_with(&x, &y, m, pm)?)?)?;
    }
    Ok(())
}

fn compare(cli: &Cli, args: &CompareArgs) -> Result<()> {
    let cfg = measure_config(cli, args.rbo_p)?;
    let (a, b) = (load_ranker(&args.a)?, load_ranker(&args.b)?);
    let log = load_log(&args.log)?;
    let cmp = compare_rankers(&a, &b, &log, &cfg, args.alpha)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&cmp)?)?;
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct SavedSweep {
    result: SweepResult,
}

fn report(args: &ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let saved: SavedSweep = serde_json::from_str(&text).context("parsing sweep JSON")?;
    let format = match args.format {
        ReportFormatArg::Json => ReportFormat::Json,
        ReportFormatArg::Csv => ReportFormat::Csv,
        ReportFormatArg::Svg => ReportFormat::Svg,
    };
    write_report(&saved.result, format, output(Some(&args.out))?)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Train(a) => train(cli, a)?,
        Command::Simulate(a) => simulate(cli, a)?,
        Command::Robustness(a) => robustness(cli, a)?,
        Command::Sweep(a) => return sweep(cli, a),
        Command::Correlate(a) => correlate_cmd(a)?,
        Command::Compare(a) => compare(cli, a)?,
        Command::Report(a) => report(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
