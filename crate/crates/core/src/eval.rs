//! Metrics, k-fold cross-validation, the tree and forest benchmark
//! protocols, the bias-variance sweep and decision-boundary grids.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, CsvOptions, Dataset, Simulation, Task};
use crate::forest::{fit_rf, tune_hsrf, tune_rf_depth, tune_rf_mtry, ForestParams};
use crate::shrinkage::{ShrinkageKind, ShrinkageSpec};
use crate::tree::{fit_cart, fit_cart_to_m_leaves_via_ccp, TreeModel, TreeParams};
use crate::Predictor;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("only one class present")]
    SingleClass,
    #[error("target is constant, R^2 undefined")]
    ConstantTarget,
    #[error("{0} predictions for {1} targets")]
    LengthMismatch(usize, usize),
    #[error("cannot make {folds} folds from {n} rows")]
    FoldTooSmall { folds: usize, n: usize },
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("bad bounds: {0}")]
    BadBounds(String),
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("model error: {0}")]
    Model(String),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores get
/// half credit.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks (1-based) over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// `1 - SSE / SST`.
pub fn r2(preds: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if preds.len() != y.len() {
        return Err(EvalError::LengthMismatch(preds.len(), y.len()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(EvalError::ConstantTarget);
    }
    let sse: f64 = preds.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

pub fn mse(preds: &[f64], y: &[f64]) -> f64 {
    preds.iter().zip(y).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / y.len() as f64
}

pub const LOG_LOSS_CLIP: f64 = 1e-12;

pub fn log_loss(probs: &[f64], labels: &[f64]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let p = p.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
            -(l * p.ln() + (1.0 - l) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / labels.len() as f64
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation over `sqrt(n)`; 0 for a single value.
pub fn sem(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Validation loss used inside cross-validation: log-loss for
/// classification, MSE for regression.
pub fn validation_loss(model: &(impl Predictor + ?Sized), val: &Dataset) -> f64 {
    let preds: Vec<f64> = val.rows().map(|x| model.predict_row(x)).collect();
    match val.task() {
        Task::Classification => log_loss(&preds, val.responses()),
        Task::Regression => mse(&preds, val.responses()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    Auc,
    R2,
    Mse,
}

impl Metric {
    pub fn for_task(task: Task) -> Metric {
        match task {
            Task::Classification => Metric::Auc,
            Task::Regression => Metric::R2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "AUC",
            Metric::R2 => "R2",
            Metric::Mse => "MSE",
        }
    }

    pub fn evaluate(self, preds: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        match self {
            Metric::Auc => auc(preds, y),
            Metric::R2 => r2(preds, y),
            Metric::Mse => Ok(mse(preds, y)),
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Mse)
    }
}

// ---------------------------------------------------------------------------
// cross-validation
// ---------------------------------------------------------------------------

/// Fold assignment: stratified by label for classification.
pub fn kfold_indices(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    let n = ds.n_samples();
    if folds < 2 || folds > n {
        return Err(EvalError::FoldTooSmall { folds, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<usize>> = match ds.task() {
        Task::Classification => {
            let (mut zeros, mut ones): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| ds.responses()[i] == 0.0);
            zeros.shuffle(&mut rng);
            ones.shuffle(&mut rng);
            vec![zeros, ones]
        }
        Task::Regression => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            vec![all]
        }
    };
    let mut out = vec![Vec::new(); folds];
    let mut k = 0;
    for group in groups.iter_mut() {
        for &i in group.iter() {
            out[k % folds].push(i);
            k += 1;
        }
    }
    Ok(out)
}

/// Runs `eval(fold_train, fold_val)` on each fold; it returns one loss per
/// grid point. The result is the per-grid-point mean over folds.
pub fn cv_losses<F>(train: &Dataset, folds: usize, seed: u64, mut eval: F) -> Result<Vec<f64>, EvalError>
where
    F: FnMut(&Dataset, &Dataset) -> Result<Vec<f64>, EvalError>,
{
    let assignment = kfold_indices(train, folds, seed)?;
    let mut totals: Option<Vec<f64>> = None;
    for k in 0..folds {
        let val_idx = &assignment[k];
        let train_idx: Vec<usize> = assignment
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let losses = eval(&train.subset(&train_idx), &train.subset(val_idx))?;
        match totals.as_mut() {
            None => totals = Some(losses),
            Some(t) => t.iter_mut().zip(&losses).for_each(|(a, b)| *a += b),
        }
    }
    let totals = totals.unwrap_or_default();
    if totals.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    Ok(totals.into_iter().map(|t| t / folds as f64).collect())
}

/// Argmin of `losses`; among (near-)equal minima the last index wins, so
/// grids ordered from least to most regularized break ties toward more
/// regularization.
pub fn pick_best(losses: &[f64]) -> usize {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs().max(f64::MIN_POSITIVE);
    losses
        .iter()
        .rposition(|&l| l <= min + tol)
        .unwrap_or(losses.len().saturating_sub(1))
}

/// k-fold CV over `grid`, refitting `fit` for every grid point. `grid` must
/// be ordered from least to most regularized.
pub fn cv_select<P, M, F>(train: &Dataset, grid: &[P], folds: usize, seed: u64, fit: F) -> Result<P, EvalError>
where
    P: Clone,
    M: Predictor,
    F: Fn(&Dataset, &P) -> Result<M, EvalError>,
{
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let losses = cv_losses(train, folds, seed, |tr, val| {
        grid.iter().map(|p| Ok(validation_loss(&fit(tr, p)?, val))).collect()
    })?;
    Ok(grid[pick_best(&losses)].clone())
}

/// Chooses a shrinkage lambda by k-fold CV, fitting the tree once per fold
/// and sweeping the ascending `lambda_grid` post hoc. Ties go to the larger
/// lambda.
pub fn cv_select_shrinkage<F>(
    train: &Dataset,
    kind: ShrinkageKind,
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
    fit: F,
) -> Result<(f64, Vec<f64>), EvalError>
where
    F: Fn(&Dataset) -> Result<TreeModel, EvalError>,
{
    if lambda_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let losses = cv_losses(train, folds, seed, |tr, val| {
        let tree = fit(tr)?;
        grid.iter()
            .map(|&lambda| {
                let shrunk = ShrinkageSpec::new(kind, lambda)
                    .and_then(|s| s.apply(&tree))
                    .map_err(|e| EvalError::Model(e.to_string()))?;
                Ok(validation_loss(&shrunk, val))
            })
            .collect()
    })?;
    Ok((grid[pick_best(&losses)], losses))
}

// ---------------------------------------------------------------------------
// benchmarks
// ---------------------------------------------------------------------------

pub const PAPER_M_GRID: [usize; 10] = [2, 4, 8, 12, 15, 20, 24, 28, 30, 32];
pub const PAPER_LAMBDA_GRID: [f64; 6] = [0.1, 1.0, 10.0, 25.0, 50.0, 100.0];

/// Where a benchmark dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv {
        name: String,
        path: PathBuf,
        target: String,
        task: Task,
        #[serde(default)]
        impute_median: bool,
    },
    Simulated {
        name: String,
        n: usize,
        #[serde(default)]
        seed: u64,
        simulation: Simulation,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::Csv { name, .. } | DatasetSpec::Simulated { name, .. } => name,
        }
    }

    pub fn load(&self) -> Result<NamedDataset, EvalError> {
        let data = match self {
            DatasetSpec::Csv {
                path,
                target,
                task,
                impute_median,
                ..
            } => {
                let options = CsvOptions {
                    missing: if *impute_median {
                        data::MissingPolicy::ImputeMedian
                    } else {
                        data::MissingPolicy::Reject
                    },
                    ..Default::default()
                };
                data::load_csv(path, target, *task, options)?
            }
            DatasetSpec::Simulated { n, seed, simulation, .. } => simulation.generate(*n, *seed)?,
        };
        Ok(NamedDataset {
            name: self.name().to_string(),
            data,
        })
    }
}

#[derive(Debug, Clone)]
pub struct NamedDataset {
    pub name: String,
    pub data: Dataset,
}

/// One row of a results table: mean and standard error over splits.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResult {
    pub dataset: String,
    pub method: String,
    /// Leaf budget for trees, number of trees for forests.
    pub complexity: usize,
    /// Median selected lambda over splits, for shrunk methods.
    pub lambda: Option<f64>,
    pub metric: Metric,
    pub mean: f64,
    pub sem: f64,
    pub n_splits: usize,
    /// Mean wall-clock seconds per split (fit + tuning).
    pub wall_clock_s: f64,
    /// Metric value of every successful split, in split order.
    pub per_split: Vec<f64>,
}

pub const RESULTS_HEADER: [&str; 9] = [
    "dataset",
    "method",
    "complexity",
    "lambda",
    "metric",
    "mean",
    "sem",
    "n_splits",
    "wall_clock_s",
];

pub fn write_results<W: Write>(results: &[BenchmarkResult], writer: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(RESULTS_HEADER)?;
    for r in results {
        wtr.write_record([
            r.dataset.clone(),
            r.method.clone(),
            r.complexity.to_string(),
            r.lambda.map(|l| l.to_string()).unwrap_or_default(),
            r.metric.name().to_string(),
            r.mean.to_string(),
            r.sem.to_string(),
            r.n_splits.to_string(),
            format!("{:.6}", r.wall_clock_s),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Mean over (dataset, complexity) cells of `(treated - base) / |base|`.
pub fn relative_improvement(results: &[BenchmarkResult], base: &str, treated: &str) -> Option<f64> {
    let index: BTreeMap<(&str, &str, usize), f64> = results
        .iter()
        .filter(|r| r.n_splits > 0)
        .map(|r| ((r.dataset.as_str(), r.method.as_str(), r.complexity), r.mean))
        .collect();
    let ratios: Vec<f64> = index
        .iter()
        .filter(|((_, m, _), _)| *m == base)
        .filter_map(|((d, _, c), b)| index.get(&(*d, treated, *c)).map(|t| (t - b) / b.abs()))
        .collect();
    (!ratios.is_empty()).then(|| mean(&ratios))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeBase {
    Cart,
    CartCcp,
}

impl TreeBase {
    fn prefix(self) -> &'static str {
        match self {
            TreeBase::Cart => "CART",
            TreeBase::CartCcp => "CART-CCP",
        }
    }

    fn fit(self, train: &Dataset, m: usize, min_leaf: usize) -> Result<TreeModel, EvalError> {
        let tree = match self {
            TreeBase::Cart => fit_cart(
                train,
                &TreeParams {
                    max_leaves: Some(m),
                    min_leaf,
                    ..Default::default()
                },
            ),
            TreeBase::CartCcp => fit_cart_to_m_leaves_via_ccp(train, m, min_leaf),
        };
        tree.map_err(|e| EvalError::Model(e.to_string()))
    }
}

/// Method label of a base tree and an optional shrinkage.
pub fn tree_method_name(base: TreeBase, kind: Option<ShrinkageKind>) -> String {
    match kind {
        None => base.prefix().to_string(),
        Some(ShrinkageKind::Hs) => format!("hs{}", base.prefix()),
        Some(ShrinkageKind::Lbs) => format!("lbs{}", base.prefix()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeBenchmarkConfig {
    pub bases: Vec<TreeBase>,
    pub m_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub n_splits: usize,
    pub folds: usize,
    pub train_fraction: f64,
    pub min_leaf: usize,
    pub seed: u64,
    /// Metric for regression datasets; classification always uses AUC.
    pub regression_metric: Metric,
}

impl Default for TreeBenchmarkConfig {
    fn default() -> Self {
        TreeBenchmarkConfig {
            bases: vec![TreeBase::Cart, TreeBase::CartCcp],
            m_grid: PAPER_M_GRID.to_vec(),
            lambda_grid: PAPER_LAMBDA_GRID.to_vec(),
            n_splits: 10,
            folds: 3,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            min_leaf: 1,
            seed: 0,
            regression_metric: Metric::R2,
        }
    }
}

/// Derives the seed of split `split` of dataset `dataset`.
fn split_seed(seed: u64, dataset: usize, split: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((dataset as u64) << 32) | split as u64);
    rand::Rng::random(&mut rng)
}

struct CellOutcome {
    method: String,
    value: Result<f64, EvalError>,
    lambda: Option<f64>,
    seconds: f64,
}

fn metric_for(task: Task, regression_metric: Metric) -> Metric {
    match task {
        Task::Classification => Metric::Auc,
        Task::Regression => regression_metric,
    }
}

fn aggregate(
    dataset: &str,
    method: &str,
    complexity: usize,
    metric: Metric,
    outcomes: &[&CellOutcome],
) -> BenchmarkResult {
    let mut values = Vec::new();
    let mut lambdas = Vec::new();
    for o in outcomes {
        match &o.value {
            Ok(v) => {
                values.push(*v);
                lambdas.extend(o.lambda);
            }
            Err(e) => warn!("{dataset} / {method} / {complexity}: split failed: {e}"),
        }
    }
    let seconds = outcomes.iter().map(|o| o.seconds).sum::<f64>() / outcomes.len().max(1) as f64;
    BenchmarkResult {
        dataset: dataset.to_string(),
        method: method.to_string(),
        complexity,
        lambda: (!lambdas.is_empty()).then(|| data::median(&mut lambdas)),
        metric,
        mean: if values.is_empty() { f64::NAN } else { mean(&values) },
        sem: sem(&values),
        n_splits: values.len(),
        wall_clock_s: seconds,
        per_split: values,
    }
}

/// Per dataset, split and leaf budget: fit each base tree, score it raw and
/// after HS and LBS with lambda chosen by k-fold CV on the training part.
/// Emits `|datasets| x |bases| x 3 x |m_grid|` rows.
pub fn benchmark_trees(datasets: &[NamedDataset], cfg: &TreeBenchmarkConfig) -> Result<Vec<BenchmarkResult>, EvalError> {
    if cfg.m_grid.is_empty() || cfg.lambda_grid.is_empty() || cfg.bases.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut cells = Vec::new();
    for (d, _) in datasets.iter().enumerate() {
        for split in 0..cfg.n_splits {
            for &m in &cfg.m_grid {
                for &base in &cfg.bases {
                    cells.push((d, split, m, base));
                }
            }
        }
    }
    let outcomes: Vec<Vec<CellOutcome>> = cells
        .par_iter()
        .map(|&(d, split, m, base)| tree_cell(&datasets[d].data, cfg, split_seed(cfg.seed, d, split), m, base))
        .collect();

    let mut results = Vec::new();
    for (d, ds) in datasets.iter().enumerate() {
        let metric = metric_for(ds.data.task(), cfg.regression_metric);
        for &base in &cfg.bases {
            for kind in [None, Some(ShrinkageKind::Hs), Some(ShrinkageKind::Lbs)] {
                let method = tree_method_name(base, kind);
                for &m in &cfg.m_grid {
                    let picked: Vec<&CellOutcome> = cells
                        .iter()
                        .zip(&outcomes)
                        .filter(|((cd, _, cm, cb), _)| *cd == d && *cm == m && *cb == base)
                        .flat_map(|(_, o)| o.iter().filter(|c| c.method == method))
                        .collect();
                    results.push(aggregate(&ds.name, &method, m, metric, &picked));
                }
            }
        }
    }
    Ok(results)
}

fn tree_cell(ds: &Dataset, cfg: &TreeBenchmarkConfig, seed: u64, m: usize, base: TreeBase) -> Vec<CellOutcome> {
    let metric = metric_for(ds.task(), cfg.regression_metric);
    let methods: Vec<String> = [None, Some(ShrinkageKind::Hs), Some(ShrinkageKind::Lbs)]
        .into_iter()
        .map(|k| tree_method_name(base, k))
        .collect();
    let fail = |e: EvalError| -> Vec<CellOutcome> {
        methods
            .iter()
            .map(|method| CellOutcome {
                method: method.clone(),
                value: Err(EvalError::Model(e.to_string())),
                lambda: None,
                seconds: 0.0,
            })
            .collect()
    };
    let (train, test) = match data::train_test_split(ds, cfg.train_fraction, seed) {
        Ok(s) => s,
        Err(e) => return fail(e.into()),
    };
    let started = Instant::now();
    let tree = match base.fit(&train, m, cfg.min_leaf) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    let fit_seconds = started.elapsed().as_secs_f64();
    let score = |model: &TreeModel| -> Result<f64, EvalError> {
        let preds: Vec<f64> = test.rows().map(|x| model.predict_row(x)).collect();
        metric.evaluate(&preds, test.responses())
    };

    let mut out = vec![CellOutcome {
        method: methods[0].clone(),
        value: score(&tree),
        lambda: None,
        seconds: fit_seconds,
    }];
    for (kind, method) in [ShrinkageKind::Hs, ShrinkageKind::Lbs].into_iter().zip(&methods[1..]) {
        let started = Instant::now();
        let result = cv_select_shrinkage(&train, kind, &cfg.lambda_grid, cfg.folds, seed ^ 0x5eed, |tr| {
            base.fit(tr, m, cfg.min_leaf)
        })
        .and_then(|(lambda, _)| {
            let shrunk = ShrinkageSpec::new(kind, lambda)
                .and_then(|s| s.apply(&tree))
                .map_err(|e| EvalError::Model(e.to_string()))?;
            Ok((lambda, score(&shrunk)?))
        });
        let seconds = fit_seconds + started.elapsed().as_secs_f64();
        out.push(match result {
            Ok((lambda, v)) => CellOutcome {
                method: method.clone(),
                value: Ok(v),
                lambda: Some(lambda),
                seconds,
            },
            Err(e) => CellOutcome {
                method: method.clone(),
                value: Err(e),
                lambda: None,
                seconds,
            },
        });
    }
    out
}

/// How a forest is regularized in [`benchmark_rf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfStrategy {
    None,
    Hs,
    Depth,
    Mtry,
}

impl RfStrategy {
    pub fn method_name(self) -> &'static str {
        match self {
            RfStrategy::None => "RF",
            RfStrategy::Hs => "hsRF",
            RfStrategy::Depth => "RF-depth",
            RfStrategy::Mtry => "RF-mtry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfBenchmarkConfig {
    pub b_grid: Vec<usize>,
    pub strategies: Vec<RfStrategy>,
    pub lambda_grid: Vec<f64>,
    /// `None` entries mean unlimited depth.
    pub depth_grid: Vec<Option<usize>>,
    /// Empty means `{1, default, p}`.
    pub mtry_grid: Vec<usize>,
    pub n_splits: usize,
    pub folds: usize,
    pub train_fraction: f64,
    pub min_leaf: usize,
    pub seed: u64,
    pub regression_metric: Metric,
}

impl Default for RfBenchmarkConfig {
    fn default() -> Self {
        RfBenchmarkConfig {
            b_grid: vec![10, 25, 50],
            strategies: vec![RfStrategy::None, RfStrategy::Hs, RfStrategy::Depth, RfStrategy::Mtry],
            lambda_grid: PAPER_LAMBDA_GRID.to_vec(),
            depth_grid: vec![None, Some(8), Some(5), Some(3)],
            mtry_grid: Vec::new(),
            n_splits: 10,
            folds: 3,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            min_leaf: 1,
            seed: 0,
            regression_metric: Metric::R2,
        }
    }
}

/// Per dataset, split and forest size: fit a plain RF and each tuned variant;
/// wall-clock covers tuning plus the final fit.
pub fn benchmark_rf(datasets: &[NamedDataset], cfg: &RfBenchmarkConfig) -> Result<Vec<BenchmarkResult>, EvalError> {
    if cfg.b_grid.is_empty() || cfg.strategies.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut cells = Vec::new();
    for (d, _) in datasets.iter().enumerate() {
        for split in 0..cfg.n_splits {
            for &b in &cfg.b_grid {
                for &s in &cfg.strategies {
                    cells.push((d, split, b, s));
                }
            }
        }
    }
    // Forests already parallelize over trees, so cells run sequentially.
    let outcomes: Vec<CellOutcome> = cells
        .iter()
        .map(|&(d, split, b, strategy)| rf_cell(&datasets[d].data, cfg, split_seed(cfg.seed, d, split), b, strategy))
        .collect();

    let mut results = Vec::new();
    for (d, ds) in datasets.iter().enumerate() {
        let metric = metric_for(ds.data.task(), cfg.regression_metric);
        for &strategy in &cfg.strategies {
            for &b in &cfg.b_grid {
                let picked: Vec<&CellOutcome> = cells
                    .iter()
                    .zip(&outcomes)
                    .filter(|((cd, _, cb, cs), _)| *cd == d && *cb == b && *cs == strategy)
                    .map(|(_, o)| o)
                    .collect();
                results.push(aggregate(&ds.name, strategy.method_name(), b, metric, &picked));
            }
        }
    }
    Ok(results)
}

fn rf_cell(ds: &Dataset, cfg: &RfBenchmarkConfig, seed: u64, b: usize, strategy: RfStrategy) -> CellOutcome {
    let metric = metric_for(ds.task(), cfg.regression_metric);
    let started = Instant::now();
    let result = (|| -> Result<(f64, Option<f64>), EvalError> {
        let (train, test) = data::train_test_split(ds, cfg.train_fraction, seed)?;
        let params = ForestParams {
            n_trees: b,
            min_leaf: cfg.min_leaf,
            seed,
            ..Default::default()
        };
        let model_err = |e: crate::forest::ForestError| EvalError::Model(e.to_string());
        let cv_seed = seed ^ 0x5eed;
        let (forest, lambda) = match strategy {
            RfStrategy::None => (fit_rf(&train, &params).map_err(model_err)?, None),
            RfStrategy::Hs => {
                let out = tune_hsrf(&train, &params, &cfg.lambda_grid, cfg.folds, cv_seed).map_err(model_err)?;
                (out.forest, Some(out.selected))
            }
            RfStrategy::Depth => (
                tune_rf_depth(&train, &params, &cfg.depth_grid, cfg.folds, cv_seed)
                    .map_err(model_err)?
                    .forest,
                None,
            ),
            RfStrategy::Mtry => {
                let p = train.n_features();
                let mut grid = if cfg.mtry_grid.is_empty() {
                    vec![1, crate::forest::default_mtry(train.task(), p), p]
                } else {
                    cfg.mtry_grid.iter().map(|&m| m.clamp(1, p)).collect()
                };
                grid.sort_unstable();
                grid.dedup();
                (
                    tune_rf_mtry(&train, &params, &grid, cfg.folds, cv_seed)
                        .map_err(model_err)?
                        .forest,
                    None,
                )
            }
        };
        let preds = forest.predict_dataset(&test).map_err(model_err)?;
        Ok((metric.evaluate(&preds, test.responses())?, lambda))
    })();
    let seconds = started.elapsed().as_secs_f64();
    match result {
        Ok((v, lambda)) => CellOutcome {
            method: strategy.method_name().into(),
            value: Ok(v),
            lambda,
            seconds,
        },
        Err(e) => CellOutcome {
            method: strategy.method_name().into(),
            value: Err(e),
            lambda: None,
            seconds,
        },
    }
}

// ---------------------------------------------------------------------------
// bias-variance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasVarianceConfig {
    pub simulation: Simulation,
    pub leaf_grid: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_reps: usize,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for BiasVarianceConfig {
    fn default() -> Self {
        BiasVarianceConfig {
            simulation: Simulation::linear_default(),
            leaf_grid: vec![1, 2, 4, 8, 12, 16, 20, 30, 40, 50],
            n_train: 500,
            n_test: 500,
            n_reps: 100,
            lambda_grid: PAPER_LAMBDA_GRID.to_vec(),
            folds: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasVarianceRow {
    pub method: String,
    pub leaves: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    /// Standard error of the test MSE over repetitions.
    pub test_mse_sem: f64,
    pub bias2: f64,
    pub variance: f64,
    pub noise_var: f64,
    /// Mean selected lambda (0 for the unshrunk tree).
    pub mean_lambda: f64,
}

struct RepOutcome {
    // [leaf index][method] -> (test predictions, train mse, test mse, lambda)
    cells: Vec<[(Vec<f64>, f64, f64, f64); 2]>,
}

/// Monte-Carlo bias-variance decomposition of CART and HS-CART over leaf
/// budgets. A single test set is drawn once; each repetition draws a fresh
/// training set, and lambda is chosen per repetition by k-fold CV.
/// Bias and variance are measured against the noiseless target.
pub fn bias_variance_sweep(cfg: &BiasVarianceConfig) -> Result<Vec<BiasVarianceRow>, EvalError> {
    if cfg.leaf_grid.is_empty() || cfg.lambda_grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if cfg.n_reps == 0 {
        return Err(EvalError::Model("need at least one repetition".into()));
    }
    let sim = &cfg.simulation;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let test_seed: u64 = rand::Rng::random(&mut seeds);
    let rep_seeds: Vec<u64> = (0..cfg.n_reps).map(|_| rand::Rng::random(&mut seeds)).collect();
    let test = sim.generate(cfg.n_test, test_seed)?;
    let truth: Vec<f64> = test.rows().map(|x| sim.target(x)).collect();

    let reps: Vec<RepOutcome> = rep_seeds
        .par_iter()
        .map(|&seed| -> Result<RepOutcome, EvalError> {
            let train = sim.generate(cfg.n_train, seed)?;
            let mut cells = Vec::with_capacity(cfg.leaf_grid.len());
            for &m in &cfg.leaf_grid {
                let fit = |tr: &Dataset| {
                    fit_cart(tr, &TreeParams::with_max_leaves(m)).map_err(|e| EvalError::Model(e.to_string()))
                };
                let tree = fit(&train)?;
                let (lambda, _) = cv_select_shrinkage(&train, ShrinkageKind::Hs, &cfg.lambda_grid, cfg.folds, seed, fit)?;
                let hs = crate::shrinkage::apply_hs(&tree, lambda).map_err(|e| EvalError::Model(e.to_string()))?;
                let eval = |model: &TreeModel, lambda: f64| {
                    let preds: Vec<f64> = test.rows().map(|x| model.predict_row(x)).collect();
                    let train_mse = validation_loss(model, &train);
                    let test_mse = mse(&preds, test.responses());
                    (preds, train_mse, test_mse, lambda)
                };
                cells.push([eval(&tree, 0.0), eval(&hs, lambda)]);
            }
            Ok(RepOutcome { cells })
        })
        .collect::<Result<_, _>>()?;

    let r = cfg.n_reps as f64;
    let mut rows = Vec::new();
    for (method_idx, method) in ["CART", "hsCART"].into_iter().enumerate() {
        for (leaf_idx, &leaves) in cfg.leaf_grid.iter().enumerate() {
            fn pick(rep: &RepOutcome, leaf: usize, method: usize) -> &(Vec<f64>, f64, f64, f64) {
                &rep.cells[leaf][method]
            }
            let cell = |rep| pick(rep, leaf_idx, method_idx);
            let mut bias2 = 0.0;
            let mut variance = 0.0;
            for (k, &f) in truth.iter().enumerate() {
                let avg = reps.iter().map(|rep| cell(rep).0[k]).sum::<f64>() / r;
                bias2 += (avg - f).powi(2);
                variance += reps.iter().map(|rep| (cell(rep).0[k] - avg).powi(2)).sum::<f64>() / r;
            }
            let test_mses: Vec<f64> = reps.iter().map(|rep| cell(rep).2).collect();
            rows.push(BiasVarianceRow {
                method: method.to_string(),
                leaves,
                train_mse: reps.iter().map(|rep| cell(rep).1).sum::<f64>() / r,
                test_mse: mean(&test_mses),
                test_mse_sem: sem(&test_mses),
                bias2: bias2 / truth.len() as f64,
                variance: variance / truth.len() as f64,
                noise_var: sim.noise_variance(),
                mean_lambda: reps.iter().map(|rep| cell(rep).3).sum::<f64>() / r,
            });
        }
    }
    Ok(rows)
}

pub fn write_bias_variance<W: Write>(rows: &[BiasVarianceRow], writer: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "method",
        "leaves",
        "train_mse",
        "test_mse",
        "test_mse_sem",
        "bias2",
        "variance",
        "noise_var",
        "mean_lambda",
    ])?;
    for row in rows {
        wtr.write_record([
            row.method.clone(),
            row.leaves.to_string(),
            row.train_mse.to_string(),
            row.test_mse.to_string(),
            row.test_mse_sem.to_string(),
            row.bias2.to_string(),
            row.variance.to_string(),
            row.noise_var.to_string(),
            row.mean_lambda.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// decision boundaries
// ---------------------------------------------------------------------------

/// Predictions on a `resolution x resolution` lattice over two features.
/// `values[a * resolution + b]` is the prediction at `(xi[a], xj[b])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub resolution: usize,
    pub xi: Vec<f64>,
    pub xj: Vec<f64>,
    pub values: Vec<f64>,
}

pub const DEFAULT_RESOLUTION: usize = 200;

fn lattice(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
        .collect()
}

/// Evaluates `model` over `bounds[0]` for feature `feature_i` and `bounds[1]`
/// for feature `feature_j`, pinning the other features to `fixed_values`.
pub fn boundary_grid(
    model: &(impl Predictor + ?Sized),
    feature_i: usize,
    feature_j: usize,
    bounds: [(f64, f64); 2],
    resolution: usize,
    fixed_values: &[f64],
) -> Result<BoundaryGrid, EvalError> {
    let p = model.n_features();
    if feature_i >= p || feature_j >= p || feature_i == feature_j {
        return Err(EvalError::BadBounds(format!(
            "features ({feature_i}, {feature_j}) must be distinct and < {p}"
        )));
    }
    for (lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(EvalError::BadBounds(format!("[{lo}, {hi}] is not a proper interval")));
        }
    }
    if resolution < 2 {
        return Err(EvalError::BadBounds("resolution must be at least 2".into()));
    }
    if fixed_values.len() != p {
        return Err(EvalError::BadBounds(format!("{} fixed values for {p} features", fixed_values.len())));
    }
    let xi = lattice(bounds[0].0, bounds[0].1, resolution);
    let xj = lattice(bounds[1].0, bounds[1].1, resolution);
    let values = (0..resolution * resolution)
        .into_par_iter()
        .map_init(
            || fixed_values.to_vec(),
            |x, k| {
                x[feature_i] = xi[k / resolution];
                x[feature_j] = xj[k % resolution];
                model.predict_row(x)
            },
        )
        .collect();
    Ok(BoundaryGrid {
        resolution,
        xi,
        xj,
        values,
    })
}

impl BoundaryGrid {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["xi", "xj", "prediction"])?;
        for (k, v) in self.values.iter().enumerate() {
            wtr.write_record([
                self.xi[k / self.resolution].to_string(),
                self.xj[k % self.resolution].to_string(),
                v.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`BoundaryGrid::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, EvalError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut triples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64, EvalError> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| EvalError::BadGrid(format!("unparseable row {:?}", rec)))
            };
            triples.push((parse(0)?, parse(1)?, parse(2)?));
        }
        let resolution = (triples.len() as f64).sqrt().round() as usize;
        if resolution < 1 || resolution * resolution != triples.len() {
            return Err(EvalError::BadGrid(format!("{} rows is not a square lattice", triples.len())));
        }
        let xi: Vec<f64> = (0..resolution).map(|a| triples[a * resolution].0).collect();
        let xj: Vec<f64> = (0..resolution).map(|b| triples[b].1).collect();
        for (k, t) in triples.iter().enumerate() {
            if t.0 != xi[k / resolution] || t.1 != xj[k % resolution] {
                return Err(EvalError::BadGrid(format!("row {} is out of lattice order", k + 1)));
            }
        }
        Ok(BoundaryGrid {
            resolution,
            xi,
            xj,
            values: triples.into_iter().map(|t| t.2).collect(),
        })
    }
}

/// Number of 4-connected components of the cells whose value exceeds
/// `threshold`.
pub fn fragmentation_score(grid: &BoundaryGrid, threshold: f64) -> Result<usize, EvalError> {
    let r = grid.resolution;
    if r == 0 || grid.values.len() != r * r {
        return Err(EvalError::BadGrid(format!(
            "{} values for resolution {r}",
            grid.values.len()
        )));
    }
    let above: Vec<bool> = grid.values.iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; r * r];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..r * r {
        if !above[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (a, b) = (k / r, k % r);
            let mut visit = |na: usize, nb: usize| {
                let nk = na * r + nb;
                if above[nk] && !seen[nk] {
                    seen[nk] = true;
                    stack.push(nk);
                }
            };
            if a > 0 {
                visit(a - 1, b);
            }
            if a + 1 < r {
                visit(a + 1, b);
            }
            if b > 0 {
                visit(a, b - 1);
            }
            if b + 1 < r {
                visit(a, b + 1);
            }
        }
    }
    Ok(components)
}

/// Per-feature `(min, max)` of a dataset, for default boundary bounds.
pub fn feature_ranges(ds: &Dataset) -> Vec<(f64, f64)> {
    (0..ds.n_features())
        .map(|j| {
            ds.rows()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, gen_friedman1, NoiseKind};
    use crate::tree::tests::four_point_tree;
    use proptest::prelude::*;

    fn brute_force_auc(scores: &[f64], labels: &[f64]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1.0 && lj == 0.0 {
                    pairs += 1.0;
                    credit += match scores[i].total_cmp(&scores[j]) {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => 0.0,
                    };
                }
            }
        }
        credit / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.9], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.1], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(EvalError::SingleClass)));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<f64> = data.iter().map(|(_, l)| if *l { 1.0 } else { 0.0 }).collect();
            prop_assume!(labels.contains(&1.0) && labels.contains(&0.0));
            let a = auc(&scores, &labels).unwrap();
            prop_assert!((a - brute_force_auc(&scores, &labels)).abs() < 1e-12);
            // Invariant under a strictly increasing transform.
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
            prop_assert!((auc(&warped, &labels).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn r2_at_most_one(y in prop::collection::vec(-10.0f64..10.0, 3..30), noise in prop::collection::vec(-1.0f64..1.0, 30)) {
            let preds: Vec<f64> = y.iter().zip(&noise).map(|(a, b)| a + b).collect();
            if let Ok(v) = r2(&preds, &y) {
                prop_assert!(v <= 1.0);
                let exact = r2(&y, &y).unwrap();
                prop_assert_eq!(exact, 1.0);
            }
        }
    }

    #[test]
    fn r2_examples() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&[2.0; 3], &y).unwrap(), 0.0);
        assert_eq!(r2(&[3.0, 2.0, 1.0], &y).unwrap(), -3.0);
        assert!(matches!(r2(&[1.0, 1.0], &[2.0, 2.0]), Err(EvalError::ConstantTarget)));
    }

    #[test]
    fn sem_definition() {
        assert_eq!(sem(&[1.0]), 0.0);
        let v = [1.0, 2.0, 3.0, 4.0];
        let expected = (5.0f64 / 3.0 / 4.0).sqrt();
        assert!((sem(&v) - expected).abs() < 1e-15);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let ds = gen_blobs(100, 2.0, 0.0, 4).unwrap();
        let folds = kfold_indices(&ds, 3, 1).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let total_pos = ds.responses().iter().sum::<f64>();
        for f in &folds {
            let pos: f64 = f.iter().map(|&i| ds.responses()[i]).sum();
            assert!((pos - total_pos / 3.0).abs() <= 1.0);
        }
        assert_eq!(folds, kfold_indices(&ds, 3, 1).unwrap());
        assert!(matches!(kfold_indices(&ds, 1, 0), Err(EvalError::FoldTooSmall { .. })));
        assert!(matches!(kfold_indices(&ds, 101, 0), Err(EvalError::FoldTooSmall { .. })));
    }

    #[test]
    fn pick_best_prefers_later_on_ties() {
        assert_eq!(pick_best(&[3.0, 1.0, 2.0]), 1);
        assert_eq!(pick_best(&[1.0, 1.0, 2.0]), 1);
        assert_eq!(pick_best(&[2.0, 2.0]), 1);
    }

    #[test]
    fn cv_select_single_point_and_determinism() {
        let ds = gen_friedman1(60, 1.0, 1).unwrap();
        let fit = |tr: &Dataset, m: &usize| {
            fit_cart(tr, &TreeParams::with_max_leaves(*m)).map_err(|e| EvalError::Model(e.to_string()))
        };
        assert_eq!(cv_select(&ds, &[7usize], 3, 0, fit).unwrap(), 7);
        let grid = [30usize, 10, 5, 2];
        let a = cv_select(&ds, &grid, 3, 9, fit).unwrap();
        let b = cv_select(&ds, &grid, 3, 9, fit).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_response_prefers_heavy_shrinkage() {
        let mut wins = 0;
        for seed in 0..10 {
            let ds = crate::data::gen_linear_sim(150, 5, 0, NoiseKind::Gaussian, 1.0, false, seed).unwrap();
            let (lambda, _) = cv_select_shrinkage(&ds, ShrinkageKind::Hs, &[0.0, 1e12], 3, seed, |tr| {
                fit_cart(tr, &TreeParams::with_max_leaves(20)).map_err(|e| EvalError::Model(e.to_string()))
            })
            .unwrap();
            if lambda == 1e12 {
                wins += 1;
            }
        }
        assert!(wins >= 9, "{wins}");
    }

    #[test]
    fn tree_benchmark_shape_and_determinism() {
        let ds = vec![
            NamedDataset {
                name: "f1".into(),
                data: gen_friedman1(90, 1.0, 1).unwrap(),
            },
            NamedDataset {
                name: "blobs".into(),
                data: gen_blobs(90, 2.0, 0.1, 1).unwrap(),
            },
        ];
        let cfg = TreeBenchmarkConfig {
            m_grid: vec![2, 6],
            n_splits: 3,
            ..Default::default()
        };
        let results = benchmark_trees(&ds, &cfg).unwrap();
        assert_eq!(results.len(), 2 * 6 * 2);
        assert!(results.iter().all(|r| r.n_splits == 3 && r.sem >= 0.0));
        for r in results.iter().filter(|r| r.metric == Metric::Auc) {
            assert!((0.0..=1.0).contains(&r.mean));
        }
        assert_eq!(results.iter().filter(|r| r.method == "hsCART-CCP").count(), 4);
        let again = benchmark_trees(&ds, &cfg).unwrap();
        let strip = |rs: &[BenchmarkResult]| -> Vec<(String, usize, Vec<f64>, Option<f64>)> {
            rs.iter()
                .map(|r| (r.method.clone(), r.complexity, r.per_split.clone(), r.lambda))
                .collect()
        };
        assert_eq!(strip(&results), strip(&again));

        let mut buf = Vec::new();
        write_results(&results, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dataset,method,complexity,lambda,metric,mean,sem,n_splits,wall_clock_s\n"));
        assert_eq!(text.lines().count(), results.len() + 1);
    }

    #[test]
    fn failed_cells_are_recorded() {
        // Constant responses make R^2 undefined on every split.
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let flat = Dataset::from_rows(&rows, vec![1.0; 30], Task::Regression).unwrap();
        let cfg = TreeBenchmarkConfig {
            bases: vec![TreeBase::Cart],
            m_grid: vec![2],
            n_splits: 2,
            ..Default::default()
        };
        let results = benchmark_trees(&[NamedDataset { name: "flat".into(), data: flat }], &cfg).unwrap();
        assert_eq!(results.len(), 3);
        assert!(results.iter().all(|r| r.n_splits == 0 && r.mean.is_nan()));
    }

    #[test]
    fn relative_improvement_math() {
        let mk = |method: &str, mean: f64| BenchmarkResult {
            dataset: "d".into(),
            method: method.into(),
            complexity: 4,
            lambda: None,
            metric: Metric::R2,
            mean,
            sem: 0.0,
            n_splits: 1,
            wall_clock_s: 0.0,
            per_split: vec![mean],
        };
        let rs = [mk("CART", 0.5), mk("hsCART", 0.55)];
        assert!((relative_improvement(&rs, "CART", "hsCART").unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(relative_improvement(&rs, "CART", "nope"), None);
    }

    #[test]
    fn rf_benchmark_rows() {
        let ds = vec![NamedDataset {
            name: "f1".into(),
            data: gen_friedman1(60, 1.0, 3).unwrap(),
        }];
        let cfg = RfBenchmarkConfig {
            b_grid: vec![2, 4],
            n_splits: 2,
            depth_grid: vec![None, Some(2)],
            ..Default::default()
        };
        let results = benchmark_rf(&ds, &cfg).unwrap();
        assert_eq!(results.len(), 4 * 2);
        assert!(results.iter().all(|r| r.n_splits == 2 && r.wall_clock_s >= 0.0));
        assert!(results.iter().filter(|r| r.method == "hsRF").all(|r| r.lambda.is_some()));
    }

    #[test]
    fn bias_variance_single_leaf_identical() {
        let cfg = BiasVarianceConfig {
            simulation: Simulation::Linear {
                p: 5,
                s: 2,
                noise: NoiseKind::Gaussian,
                noise_var: 0.01,
                interactions: false,
            },
            leaf_grid: vec![1, 8],
            n_train: 60,
            n_test: 50,
            n_reps: 6,
            ..Default::default()
        };
        let rows = bias_variance_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        let cart = rows.iter().find(|r| r.method == "CART" && r.leaves == 1).unwrap();
        let hs = rows.iter().find(|r| r.method == "hsCART" && r.leaves == 1).unwrap();
        assert_eq!(cart.test_mse, hs.test_mse);
        assert_eq!(cart.variance, hs.variance);
        assert_eq!(cart.bias2, hs.bias2);
        assert_eq!(rows, bias_variance_sweep(&cfg).unwrap());
    }

    #[test]
    fn bias_variance_reconstructs_test_mse() {
        let cfg = BiasVarianceConfig {
            leaf_grid: vec![4, 16],
            n_train: 200,
            n_test: 500,
            n_reps: 20,
            ..Default::default()
        };
        for row in bias_variance_sweep(&cfg).unwrap() {
            let recon = row.bias2 + row.variance + row.noise_var;
            assert!((recon - row.test_mse).abs() <= 0.02 * row.test_mse, "{row:?}");
        }
    }

    #[test]
    fn boundary_of_constant_and_stump() {
        let tree = fit_cart(&gen_friedman1(40, 1.0, 2).unwrap(), &TreeParams::with_max_leaves(1)).unwrap();
        let grid = boundary_grid(&tree, 0, 1, [(0.0, 1.0), (0.0, 1.0)], 20, &[0.5; 10]).unwrap();
        assert_eq!(grid.values.len(), 400);
        assert!(grid.values.iter().all(|&v| v == tree.root_mean()));

        // The four-point stump splits its only feature; pad with a dummy one.
        let base = four_point_tree();
        let mut doc = crate::tree::TreeDocument::from(base);
        doc.n_features = 2;
        doc.feature_names.push("z".into());
        let stump = TreeModel::try_from(doc).unwrap();
        let grid = boundary_grid(&stump, 0, 1, [(0.0, 5.0), (-1.0, 1.0)], 11, &[0.0, 0.0]).unwrap();
        for a in 0..11 {
            let row = &grid.values[a * 11..(a + 1) * 11];
            assert!(row.iter().all(|&v| v == row[0]));
            assert_eq!(row[0], if grid.xi[a] <= 2.5 { 0.0 } else { 2.0 });
        }
        assert_eq!(fragmentation_score(&grid, 0.5).unwrap(), 1);
    }

    #[test]
    fn boundary_errors() {
        let tree = four_point_tree();
        assert!(matches!(
            boundary_grid(&tree, 0, 0, [(0.0, 1.0), (0.0, 1.0)], 10, &[0.0]),
            Err(EvalError::BadBounds(_))
        ));
    }

    #[test]
    fn fragmentation_examples() {
        let constant = BoundaryGrid {
            resolution: 3,
            xi: vec![0.0, 1.0, 2.0],
            xj: vec![0.0, 1.0, 2.0],
            values: vec![0.9; 9],
        };
        assert_eq!(fragmentation_score(&constant, 0.5).unwrap(), 1);
        let checker = BoundaryGrid {
            resolution: 2,
            xi: vec![0.0, 1.0],
            xj: vec![0.0, 1.0],
            values: vec![1.0, 0.0, 0.0, 1.0],
        };
        assert_eq!(fragmentation_score(&checker, 0.5).unwrap(), 2);
        let bad = BoundaryGrid {
            values: vec![1.0; 3],
            ..checker.clone()
        };
        assert!(matches!(fragmentation_score(&bad, 0.5), Err(EvalError::BadGrid(_))));
    }

    #[test]
    fn grid_csv_round_trip() {
        let grid = BoundaryGrid {
            resolution: 2,
            xi: vec![0.0, 1.5],
            xj: vec![-1.0, 1.0],
            values: vec![0.1, 0.7, 0.3, 0.9],
        };
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        assert_eq!(BoundaryGrid::read_csv(buf.as_slice()).unwrap(), grid);
        assert!(matches!(
            BoundaryGrid::read_csv("xi,xj,prediction\n0,0,1\n0,1,1\n".as_bytes()),
            Err(EvalError::BadGrid(_))
        ));
    }
}
