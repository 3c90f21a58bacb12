//! Random forests and the three ways of regularizing them: hierarchical
//! shrinkage (fit once per fold, sweep lambda post hoc), maximum depth and
//! mtry (refit per grid point).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Task};
use crate::eval::{cv_losses, pick_best, validation_loss, EvalError};
use crate::shrinkage::{shrink_forest, ShrinkageError, ShrinkageKind};
use crate::tree::{fit_cart, TreeError, TreeModel, TreeParams};
use crate::Predictor;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("invalid mtry {mtry} for {p} features")]
    InvalidMtry { mtry: usize, p: usize },
    #[error("a forest needs at least one tree")]
    NoTrees,
    #[error("query has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed forest: {0}")]
    Malformed(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Shrinkage(#[from] ShrinkageError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
}

impl From<EvalError> for ForestError {
    fn from(e: EvalError) -> Self {
        ForestError::Eval(Box::new(e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features drawn per split; `None` uses the task default.
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            mtry: None,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn new(n_trees: usize, seed: u64) -> Self {
        ForestParams {
            n_trees,
            seed,
            ..Default::default()
        }
    }
}

/// ceil(sqrt(p)) for classification, max(1, floor(p / 3)) for regression.
pub fn default_mtry(task: Task, p: usize) -> usize {
    match task {
        Task::Classification => ((p as f64).sqrt().ceil() as usize).clamp(1, p.max(1)),
        Task::Regression => (p / 3).max(1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForestDocument", into = "ForestDocument")]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    mtry: usize,
    max_depth: Option<usize>,
    bootstrap: bool,
    seed: u64,
    task: Task,
    n_features: usize,
}

/// Seeds tree `index` independently of scheduling.
fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Fits `n_trees` CART trees in parallel, each on its own bootstrap sample
/// (when enabled) and with `mtry` features drawn at every split. Node
/// statistics come from the tree's own sample.
pub fn fit_rf(train: &Dataset, params: &ForestParams) -> Result<ForestModel, ForestError> {
    if params.n_trees == 0 {
        return Err(ForestError::NoTrees);
    }
    let p = train.n_features();
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(train.task(), p));
    if mtry == 0 || mtry > p {
        return Err(ForestError::InvalidMtry { mtry, p });
    }
    let n = train.n_samples();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = tree_rng(params.seed, b);
            let tree_params = TreeParams {
                max_leaves: None,
                min_leaf: params.min_leaf,
                max_depth: params.max_depth,
                mtry: Some(mtry),
                seed: rng.random(),
            };
            if params.bootstrap {
                let idx = bootstrap_indices(n, &mut rng);
                fit_cart(&train.subset(&idx), &tree_params)
            } else {
                fit_cart(train, &tree_params)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        trees,
        mtry,
        max_depth: params.max_depth,
        bootstrap: params.bootstrap,
        seed: params.seed,
        task: train.task(),
        n_features: p,
    })
}

pub(crate) fn bootstrap_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

impl ForestModel {
    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn max_depth(&self) -> Option<usize> {
        self.max_depth
    }

    pub fn bootstrap(&self) -> bool {
        self.bootstrap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub(crate) fn with_trees(&self, trees: Vec<TreeModel>) -> ForestModel {
        ForestModel {
            trees,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> ForestModel {
        ForestModel {
            trees: Vec::new(),
            mtry: self.mtry,
            max_depth: self.max_depth,
            bootstrap: self.bootstrap,
            seed: self.seed,
            task: self.task,
            n_features: self.n_features,
        }
    }

    /// Mean of the tree predictions (class-1 probabilities for classification).
    pub fn predict(&self, x: &[f64]) -> Result<f64, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.predict_row(x))
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>, ForestError> {
        if ds.n_features() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: ds.n_features(),
            });
        }
        Ok(ds.rows().collect::<Vec<_>>().par_iter().map(|x| self.predict_row(x)).collect())
    }
}

impl Predictor for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn task(&self) -> Task {
        self.task
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Result of a cross-validated tuning run.
#[derive(Debug, Clone)]
pub struct TuneOutcome<P> {
    pub forest: ForestModel,
    pub selected: P,
    /// Mean validation loss per grid point, in grid order.
    pub cv_loss: Vec<f64>,
    /// Number of `fit_rf` calls made, including the final refit.
    pub forest_fits: usize,
}

/// Tunes a single HS lambda shared by all trees. Each fold fits one forest
/// and sweeps the whole grid post hoc, so the total is `folds + 1` fits.
/// Ties go to the larger lambda.
pub fn tune_hsrf(
    train: &Dataset,
    params: &ForestParams,
    lambda_grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<TuneOutcome<f64>, ForestError> {
    if lambda_grid.is_empty() {
        return Err(EvalError::EmptyGrid.into());
    }
    let mut grid: Vec<f64> = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut fits = 0;
    let losses = cv_losses(train, folds, seed, |fold_train, fold_val| {
        fits += 1;
        let forest = fit_rf(fold_train, params).map_err(|e| EvalError::Model(e.to_string()))?;
        grid.iter()
            .map(|&lambda| {
                let shrunk =
                    shrink_forest(&forest, lambda, ShrinkageKind::Hs).map_err(|e| EvalError::Model(e.to_string()))?;
                Ok(validation_loss(&shrunk, fold_val))
            })
            .collect()
    })?;
    let best = pick_best(&losses);
    let forest = fit_rf(train, params)?;
    fits += 1;
    Ok(TuneOutcome {
        forest: shrink_forest(&forest, grid[best], ShrinkageKind::Hs)?,
        selected: grid[best],
        cv_loss: losses,
        forest_fits: fits,
    })
}

fn tune_by_refit<P: Copy>(
    train: &Dataset,
    grid: &[P],
    folds: usize,
    seed: u64,
    make: impl Fn(P) -> ForestParams,
) -> Result<TuneOutcome<P>, ForestError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid.into());
    }
    let mut fits = 0;
    let losses = cv_losses(train, folds, seed, |fold_train, fold_val| {
        grid.iter()
            .map(|&value| {
                fits += 1;
                let forest = fit_rf(fold_train, &make(value)).map_err(|e| EvalError::Model(e.to_string()))?;
                Ok(validation_loss(&forest, fold_val))
            })
            .collect()
    })?;
    let best = pick_best(&losses);
    let forest = fit_rf(train, &make(grid[best]))?;
    fits += 1;
    Ok(TuneOutcome {
        forest,
        selected: grid[best],
        cv_loss: losses,
        forest_fits: fits,
    })
}

/// Tunes the maximum depth (`None` = unlimited), refitting per grid point.
/// Ties go to the shallower depth.
pub fn tune_rf_depth(
    train: &Dataset,
    params: &ForestParams,
    depth_grid: &[Option<usize>],
    folds: usize,
    seed: u64,
) -> Result<TuneOutcome<Option<usize>>, ForestError> {
    // Least regularized first: unlimited, then decreasing depth.
    let mut grid = depth_grid.to_vec();
    grid.sort_by_key(|d| std::cmp::Reverse(d.unwrap_or(usize::MAX)));
    tune_by_refit(train, &grid, folds, seed, |max_depth| ForestParams {
        max_depth,
        ..params.clone()
    })
}

/// Tunes mtry, refitting per grid point. Ties go to the smaller mtry.
pub fn tune_rf_mtry(
    train: &Dataset,
    params: &ForestParams,
    mtry_grid: &[usize],
    folds: usize,
    seed: u64,
) -> Result<TuneOutcome<usize>, ForestError> {
    let p = train.n_features();
    if let Some(&bad) = mtry_grid.iter().find(|&&m| m == 0 || m > p) {
        return Err(ForestError::InvalidMtry { mtry: bad, p });
    }
    let mut grid = mtry_grid.to_vec();
    grid.sort_by_key(|&m| std::cmp::Reverse(m));
    tune_by_refit(train, &grid, folds, seed, |mtry| ForestParams {
        mtry: Some(mtry),
        ..params.clone()
    })
}

pub const FOREST_FORMAT: &str = "shrinkwood.forest";

/// On-disk envelope of a [`ForestModel`]; trees are embedded tree documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestDocument {
    pub format: String,
    pub version: u32,
    pub n_trees: usize,
    pub mtry: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    pub task: Task,
    pub n_features: usize,
    pub trees: Vec<TreeModel>,
}

impl From<ForestModel> for ForestDocument {
    fn from(f: ForestModel) -> Self {
        ForestDocument {
            format: FOREST_FORMAT.into(),
            version: crate::tree::FORMAT_VERSION,
            n_trees: f.trees.len(),
            mtry: f.mtry,
            max_depth: f.max_depth,
            bootstrap: f.bootstrap,
            seed: f.seed,
            task: f.task,
            n_features: f.n_features,
            trees: f.trees,
        }
    }
}

impl TryFrom<ForestDocument> for ForestModel {
    type Error = ForestError;

    fn try_from(doc: ForestDocument) -> Result<Self, Self::Error> {
        if doc.format != FOREST_FORMAT {
            return Err(ForestError::Malformed(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != crate::tree::FORMAT_VERSION {
            return Err(ForestError::Malformed(format!("unsupported version {}", doc.version)));
        }
        if doc.trees.is_empty() || doc.trees.len() != doc.n_trees {
            return Err(ForestError::Malformed("tree count mismatch".into()));
        }
        if doc.mtry == 0 || doc.mtry > doc.n_features {
            return Err(ForestError::InvalidMtry {
                mtry: doc.mtry,
                p: doc.n_features,
            });
        }
        if doc
            .trees
            .iter()
            .any(|t| t.task() != doc.task || t.n_features() != doc.n_features)
        {
            return Err(ForestError::Malformed("trees disagree with the envelope".into()));
        }
        Ok(ForestModel {
            trees: doc.trees,
            mtry: doc.mtry,
            max_depth: doc.max_depth,
            bootstrap: doc.bootstrap,
            seed: doc.seed,
            task: doc.task,
            n_features: doc.n_features,
        })
    }
}
