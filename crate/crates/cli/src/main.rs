mod model_io;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Deserialize;
use shrinkwood::data::{self, NoiseKind, Simulation, Task};
use shrinkwood::eval::{
    self, BiasVarianceConfig, BoundaryGrid, DatasetSpec, RfBenchmarkConfig, TreeBenchmarkConfig,
    PAPER_LAMBDA_GRID,
};
use shrinkwood::forest::{fit_rf, tune_hsrf, ForestParams};
use shrinkwood::shrinkage::{shrink_forest, ShrinkageKind, ShrinkageSpec};
use shrinkwood::stumpspace::{self, StumpFeatureMap};
use shrinkwood::tree::{fit_cart, TreeModel, TreeParams};

use model_io::{io_err, load_features, load_model, open_output, save_model, DataArgs, Model};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Invariant(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violation: {m}"),
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Decision trees and random forests with post-hoc hierarchical shrinkage.
#[derive(Debug, Parser)]
#[command(name = "shrinkwood", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "SHRINKWOOD_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a tree or forest and write the model JSON.
    Fit(FitArgs),
    /// Apply HS or LBS to a model JSON. Needs no training data.
    Shrink(ShrinkArgs),
    /// Predict the rows of a CSV with a model JSON.
    Predict(PredictArgs),
    /// Choose lambda by k-fold CV, GCV or LOOCV.
    TuneLambda(TuneArgs),
    /// Run the tree and/or forest benchmark described in a TOML config.
    Benchmark(BenchmarkArgs),
    /// Run the bias-variance sweep, or emit a simulated dataset.
    Simulate(SimulateArgs),
    /// Evaluate a model on a 2-D lattice and write the grid CSV.
    Boundary(BoundaryArgs),
    /// Check a shrunk tree against ridge regression on its stump basis.
    ValidateModel(ValidateArgs),
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be finite and non-negative, got {v}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = positive_usize)]
    max_leaves: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    min_leaf: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    /// Features drawn per split.
    #[arg(long, value_parser = positive_usize)]
    mtry: Option<usize>,
    /// Prune the grown tree with this cost-complexity penalty.
    #[arg(long, value_parser = non_negative, conflicts_with_all = ["ccp_leaves", "n_trees"])]
    ccp_alpha: Option<f64>,
    /// Grow fully, then prune along the cost-complexity path to at most this many leaves.
    #[arg(long, value_parser = positive_usize, conflicts_with_all = ["max_leaves", "n_trees"])]
    ccp_leaves: Option<usize>,
    /// Fit a random forest with this many trees instead of a single tree.
    #[arg(long, value_parser = positive_usize)]
    n_trees: Option<usize>,
    /// Grow forest trees on the full training set.
    #[arg(long, requires = "n_trees")]
    no_bootstrap: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Hs,
    Lbs,
}

impl From<KindArg> for ShrinkageKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Hs => ShrinkageKind::Hs,
            KindArg::Lbs => ShrinkageKind::Lbs,
        }
    }
}

#[derive(Debug, Args)]
struct ShrinkArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "hs")]
    kind: KindArg,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Column to ignore when present (e.g. the response).
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    impute_median: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TuneMethod {
    Cv,
    Gcv,
    Loocv,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "cv")]
    method: TuneMethod,
    #[arg(long, value_enum, default_value = "hs")]
    kind: KindArg,
    /// Comma-separated lambda grid.
    #[arg(long, value_delimiter = ',', value_parser = non_negative)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Pre-fitted tree for gcv/loocv; it must have been fit on --data.
    #[arg(long, conflicts_with_all = ["max_leaves", "n_trees"])]
    model: Option<PathBuf>,
    #[arg(long, value_parser = positive_usize)]
    max_leaves: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    min_leaf: usize,
    /// Tune a shared lambda for a forest of this many trees (cv, hs only).
    #[arg(long, value_parser = positive_usize)]
    n_trees: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// TOML file with `[[datasets]]` and optional `[trees]` / `[forests]` tables.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimKind {
    Linear,
    Friedman1,
    Friedman3,
    Blobs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML file holding a full sweep configuration; overrides the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    simulation: SimKind,
    #[arg(long, default_value_t = 50)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    s: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseArg,
    #[arg(long, default_value_t = 0.01, value_parser = non_negative)]
    noise_var: f64,
    #[arg(long)]
    interactions: bool,
    /// Noise standard deviation of the Friedman generators.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    noise_sd: f64,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.1)]
    label_noise: f64,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 500)]
    n_test: usize,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    reps: usize,
    #[arg(long, value_delimiter = ',', value_parser = positive_usize)]
    leaves: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = non_negative)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Instead of the sweep, write this many simulated rows as CSV (response column `y`).
    #[arg(long, value_parser = positive_usize)]
    emit_data: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Laplacian,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    #[arg(long)]
    model: PathBuf,
    /// Two feature indices, e.g. `0,1`.
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<usize>,
    #[arg(long, default_value_t = eval::DEFAULT_RESOLUTION)]
    resolution: usize,
    /// `lo_i,hi_i,lo_j,hi_j`; defaults to the data ranges.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    bounds: Option<Vec<f64>>,
    /// Values for the other features; defaults to the data medians.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    fixed: Option<Vec<f64>>,
    /// CSV supplying default bounds and fixed values.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Cutoff for the fragmentation score printed on stderr.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Directory to write the stump matrix and ridge coefficients to.
    #[arg(long)]
    dump_stumps: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shrinkwood: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seed = cli.seed.unwrap_or(0);
    let output = cli.output.as_deref();
    match cli.command {
        Command::Fit(args) => fit(args, seed, output),
        Command::Shrink(args) => shrink(args, output),
        Command::Predict(args) => predict(args, output),
        Command::TuneLambda(args) => tune_lambda(args, seed, output),
        Command::Benchmark(args) => benchmark(args, cli.seed, output),
        Command::Simulate(args) => simulate(args, seed, cli.seed.is_some(), output),
        Command::Boundary(args) => boundary(args, output),
        Command::ValidateModel(args) => validate_model(args, output),
    }
}

fn fit(args: FitArgs, seed: u64, output: Option<&Path>) -> Result<(), CliError> {
    let train = args.data.load(None)?;
    let model = if let Some(n_trees) = args.n_trees {
        if args.max_leaves.is_some() {
            return Err(CliError::Usage("--max-leaves applies to single trees only".into()));
        }
        let params = ForestParams {
            n_trees,
            mtry: args.mtry,
            max_depth: args.max_depth,
            min_leaf: args.min_leaf,
            bootstrap: !args.no_bootstrap,
            seed,
        };
        Model::Forest(fit_rf(&train, &params).map_err(data_err)?)
    } else {
        let params = TreeParams {
            max_leaves: args.max_leaves,
            min_leaf: args.min_leaf,
            max_depth: args.max_depth,
            mtry: args.mtry,
            seed,
        };
        let mut tree = fit_cart(&train, &params).map_err(data_err)?;
        if let Some(alpha) = args.ccp_alpha {
            tree = tree.prune_ccp(alpha).map_err(data_err)?;
        }
        if let Some(m) = args.ccp_leaves {
            tree = tree.prune_to_leaves(m);
        }
        info!("fitted tree with {} leaves", tree.leaf_count());
        Model::Tree(tree)
    };
    save_model(&model, output)
}

fn shrink(args: ShrinkArgs, output: Option<&Path>) -> Result<(), CliError> {
    let kind = ShrinkageKind::from(args.kind);
    let shrunk = match load_model(&args.model)? {
        Model::Tree(tree) => Model::Tree(
            ShrinkageSpec::new(kind, args.lambda)
                .and_then(|s| s.apply(&tree))
                .map_err(data_err)?,
        ),
        Model::Forest(forest) => Model::Forest(shrink_forest(&forest, args.lambda, kind).map_err(data_err)?),
    };
    save_model(&shrunk, output)
}

fn predict(args: PredictArgs, output: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let options = data::CsvOptions {
        missing: if args.impute_median {
            data::MissingPolicy::ImputeMedian
        } else {
            data::MissingPolicy::Reject
        },
        ..Default::default()
    };
    let rows = load_features(&args.data, args.target.as_deref(), options, model.feature_names())?;
    let predictor = model.as_predictor();
    let mut out = csv::Writer::from_writer(open_output(output)?);
    out.write_record(["prediction"]).map_err(data_err)?;
    for row in &rows {
        out.write_record([predictor.predict_row(row).to_string()]).map_err(data_err)?;
    }
    out.flush().map_err(io_err)
}

fn tune_lambda(args: TuneArgs, seed: u64, output: Option<&Path>) -> Result<(), CliError> {
    let kind = ShrinkageKind::from(args.kind);
    let grid = if args.grid.is_empty() {
        PAPER_LAMBDA_GRID.to_vec()
    } else {
        args.grid.clone()
    };
    let closed_form = matches!(args.method, TuneMethod::Gcv | TuneMethod::Loocv);
    if closed_form && kind == ShrinkageKind::Lbs {
        return Err(CliError::Usage("gcv and loocv are implemented for hs only".into()));
    }
    if closed_form && args.n_trees.is_some() {
        return Err(CliError::Usage("gcv and loocv apply to single trees; use --method cv for forests".into()));
    }
    if args.n_trees.is_some() && kind == ShrinkageKind::Lbs {
        return Err(CliError::Usage("forest tuning supports hs only".into()));
    }
    if !closed_form && args.model.is_some() {
        return Err(CliError::Usage("--method cv refits per fold and does not take --model".into()));
    }

    let prefit = match &args.model {
        Some(path) => match load_model(path)? {
            Model::Tree(t) => Some(t),
            Model::Forest(_) => return Err(CliError::Usage("--model must be a tree".into())),
        },
        None => None,
    };
    let train = args.data.load(prefit.as_ref().map(TreeModel::task))?;
    let tree_params = TreeParams {
        max_leaves: args.max_leaves,
        min_leaf: args.min_leaf,
        seed,
        ..Default::default()
    };

    // (lambda, score, effective df)
    let (selected, rows): (f64, Vec<(f64, Option<f64>, Option<f64>)>) = match args.method {
        TuneMethod::Cv => {
            if let Some(n_trees) = args.n_trees {
                let params = ForestParams {
                    n_trees,
                    min_leaf: args.min_leaf,
                    seed,
                    ..Default::default()
                };
                let out = tune_hsrf(&train, &params, &grid, args.folds, seed).map_err(data_err)?;
                let mut sorted = grid.clone();
                sorted.sort_by(f64::total_cmp);
                let rows = sorted.into_iter().zip(out.cv_loss).map(|(l, s)| (l, Some(s), None)).collect();
                (out.selected, rows)
            } else {
                let (lambda, losses) = eval::cv_select_shrinkage(&train, kind, &grid, args.folds, seed, |tr| {
                    fit_cart(tr, &tree_params).map_err(|e| eval::EvalError::Model(e.to_string()))
                })
                .map_err(data_err)?;
                let mut sorted = grid.clone();
                sorted.sort_by(f64::total_cmp);
                (lambda, sorted.into_iter().zip(losses).map(|(l, s)| (l, Some(s), None)).collect())
            }
        }
        TuneMethod::Gcv | TuneMethod::Loocv => {
            let tree = match prefit {
                Some(t) => t,
                None => fit_cart(&train, &tree_params).map_err(data_err)?,
            };
            let selection = if matches!(args.method, TuneMethod::Gcv) {
                stumpspace::gcv_select_lambda(&tree, &train, &grid)
            } else {
                stumpspace::loocv_select_lambda(&tree, &train, &grid)
            }
            .map_err(data_err)?;
            let rows = selection
                .scores
                .iter()
                .map(|s| (s.lambda, s.score, Some(s.effective_df)))
                .collect();
            (selection.lambda, rows)
        }
    };

    let mut out = csv::Writer::from_writer(open_output(output)?);
    out.write_record(["lambda", "score", "effective_df", "selected"]).map_err(data_err)?;
    for (lambda, score, df) in rows {
        out.write_record([
            lambda.to_string(),
            score.map(|s| s.to_string()).unwrap_or_default(),
            df.map(|d| d.to_string()).unwrap_or_default(),
            (lambda == selected).to_string(),
        ])
        .map_err(data_err)?;
    }
    out.flush().map_err(io_err)?;
    eprintln!("selected lambda: {selected}");
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkFile {
    datasets: Vec<DatasetSpec>,
    trees: Option<TreeBenchmarkConfig>,
    forests: Option<RfBenchmarkConfig>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn benchmark(args: BenchmarkArgs, seed: Option<u64>, output: Option<&Path>) -> Result<(), CliError> {
    let mut file: BenchmarkFile = read_toml(&args.config)?;
    if file.trees.is_none() && file.forests.is_none() {
        return Err(CliError::Usage("config needs a [trees] or [forests] table".into()));
    }
    // CSV paths are relative to the config file.
    let base = args.config.parent().unwrap_or(Path::new("."));
    for spec in file.datasets.iter_mut() {
        if let DatasetSpec::Csv { path, .. } = spec {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
    let datasets = file
        .datasets
        .iter()
        .map(|spec| spec.load().map_err(data_err))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results = Vec::new();
    if let Some(mut cfg) = file.trees {
        if let Some(s) = seed {
            cfg.seed = s;
        }
        results.extend(eval::benchmark_trees(&datasets, &cfg).map_err(data_err)?);
    }
    if let Some(mut cfg) = file.forests {
        if let Some(s) = seed {
            cfg.seed = s;
        }
        results.extend(eval::benchmark_rf(&datasets, &cfg).map_err(data_err)?);
    }
    eval::write_results(&results, open_output(output)?).map_err(data_err)
}

fn simulate(args: SimulateArgs, seed: u64, seed_given: bool, output: Option<&Path>) -> Result<(), CliError> {
    let simulation = match args.simulation {
        SimKind::Linear => Simulation::Linear {
            p: args.p,
            s: args.s,
            noise: match args.noise {
                NoiseArg::Gaussian => NoiseKind::Gaussian,
                NoiseArg::Laplacian => NoiseKind::Laplacian,
            },
            noise_var: args.noise_var,
            interactions: args.interactions,
        },
        SimKind::Friedman1 => Simulation::Friedman1 { noise_sd: args.noise_sd },
        SimKind::Friedman3 => Simulation::Friedman3 { noise_sd: args.noise_sd },
        SimKind::Blobs => Simulation::Blobs {
            separation: args.separation,
            label_noise: args.label_noise,
        },
    };
    simulation.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    if let Some(n) = args.emit_data {
        let ds = simulation.generate(n, seed).map_err(data_err)?;
        let mut out = open_output(output)?;
        data::write_csv(&ds, &mut out, "y").map_err(data_err)?;
        return out.flush().map_err(io_err);
    }

    let cfg = match &args.config {
        Some(path) => {
            let mut cfg: BiasVarianceConfig = read_toml(path)?;
            if seed_given {
                cfg.seed = seed;
            }
            cfg
        }
        None => {
            let defaults = BiasVarianceConfig::default();
            BiasVarianceConfig {
                simulation,
                leaf_grid: if args.leaves.is_empty() { defaults.leaf_grid } else { args.leaves },
                n_train: args.n_train,
                n_test: args.n_test,
                n_reps: args.reps,
                lambda_grid: if args.grid.is_empty() { defaults.lambda_grid } else { args.grid },
                folds: args.folds,
                seed,
            }
        }
    };
    if cfg.simulation.task() != Task::Regression {
        return Err(CliError::Usage("the bias-variance sweep needs a regression simulation".into()));
    }
    let rows = eval::bias_variance_sweep(&cfg).map_err(data_err)?;
    eval::write_bias_variance(&rows, open_output(output)?).map_err(data_err)
}

fn boundary(args: BoundaryArgs, output: Option<&Path>) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let predictor = model.as_predictor();
    let p = predictor.n_features();
    if args.features.len() != 2 {
        return Err(CliError::Usage("--features takes exactly two indices".into()));
    }
    if args.bounds.as_ref().is_some_and(|b| b.len() != 4) {
        return Err(CliError::Usage("--bounds takes exactly four values".into()));
    }
    let (fi, fj) = (args.features[0], args.features[1]);
    if fi >= p || fj >= p || fi == fj {
        return Err(CliError::Usage(format!(
            "--features must be two distinct indices below {p}"
        )));
    }
    let reference = match &args.data {
        Some(path) => {
            let rows = load_features(path, args.target.as_deref(), Default::default(), model.feature_names())?;
            if rows.is_empty() {
                return Err(CliError::Data(format!("{}: no rows", path.display())));
            }
            Some(rows)
        }
        None => None,
    };
    let bounds = match (&args.bounds, &reference) {
        (Some(b), _) => [(b[0], b[1]), (b[2], b[3])],
        (None, Some(rows)) => {
            let range = |j: usize| {
                rows.iter()
                    .map(|r| r[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            };
            [range(fi), range(fj)]
        }
        (None, None) => return Err(CliError::Usage("pass --bounds or --data".into())),
    };
    let fixed = match (&args.fixed, &reference) {
        (Some(f), _) => f.clone(),
        (None, Some(rows)) => (0..p)
            .map(|j| {
                let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                col.sort_by(f64::total_cmp);
                let k = col.len();
                if k % 2 == 1 {
                    col[k / 2]
                } else {
                    (col[k / 2 - 1] + col[k / 2]) / 2.0
                }
            })
            .collect(),
        (None, None) if p == 2 => vec![0.0; 2],
        (None, None) => return Err(CliError::Usage("pass --fixed or --data for the remaining features".into())),
    };
    let grid = eval::boundary_grid(predictor, fi, fj, bounds, args.resolution, &fixed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    grid.write_csv(open_output(output)?).map_err(data_err)?;
    report_fragmentation(&grid, args.threshold)
}

fn report_fragmentation(grid: &BoundaryGrid, threshold: f64) -> Result<(), CliError> {
    let score = eval::fragmentation_score(grid, threshold).map_err(|e| CliError::Invariant(e.to_string()))?;
    eprintln!("fragmentation_score={score}");
    Ok(())
}

fn validate_model(args: ValidateArgs, output: Option<&Path>) -> Result<(), CliError> {
    let tree = match load_model(&args.model)? {
        Model::Tree(t) => t,
        Model::Forest(_) => {
            return Err(CliError::Usage(
                "validate-model takes a single tree; forest trees carry bootstrap statistics".into(),
            ))
        }
    };
    let train = args.data.load(Some(tree.task()))?;
    if train.n_features() != tree.n_features() {
        return Err(CliError::Data(format!(
            "model has {} features, data has {}",
            tree.n_features(),
            train.n_features()
        )));
    }
    let spec = tree.shrinkage().unwrap_or(ShrinkageSpec {
        kind: ShrinkageKind::Hs,
        lambda: 0.0,
    });
    let oracle = match spec.kind {
        ShrinkageKind::Hs => stumpspace::hs_oracle_predict(&tree, &train, spec.lambda, train.rows()),
        ShrinkageKind::Lbs => stumpspace::lbs_oracle_predict(&tree, &train, spec.lambda, train.rows()),
    }
    .map_err(data_err)?;
    let mut deviation: f64 = 0.0;
    for (x, o) in train.rows().zip(&oracle) {
        let direct = tree.predict(x).map_err(data_err)?;
        deviation = deviation.max((direct - o).abs());
    }

    if let Some(dir) = &args.dump_stumps {
        fs::create_dir_all(dir).map_err(io_err)?;
        let map = StumpFeatureMap::new(&tree).map_err(data_err)?;
        let create = |name: &str| fs::File::create(dir.join(name)).map_err(io_err);
        stumpspace::write_stump_matrix(&map, &train, create("stumps.csv")?).map_err(data_err)?;
        let fit = stumpspace::stump_coefficients(&tree, &train, spec.lambda).map_err(data_err)?;
        stumpspace::write_coefficients(&map, &fit, create("coefficients.csv")?).map_err(data_err)?;
    }

    let mut out = open_output(output)?;
    writeln!(out, "max_deviation={deviation:e}").map_err(io_err)?;
    out.flush().map_err(io_err)?;
    if deviation.is_nan() || deviation >= args.tolerance {
        return Err(CliError::Invariant(format!(
            "shrunk tree deviates from the ridge oracle by {deviation:e} (tolerance {:e})",
            args.tolerance
        )));
    }
    Ok(())
}
