//! Trees as linear models on supervised features.
//!
//! Every interior node `t` with children `tL`, `tR` defines a tri-valued
//! decision stump
//!
//! ```text
//! psi_t(x) = (N(tR) 1{x in tL} - N(tL) 1{x in tR}) / sqrt(N(tL) N(tR))
//! ```
//!
//! On the training data these columns are mutually orthogonal with squared
//! norm `N(t)` and orthogonal to the constant vector, so ridge regression on
//! them decouples into one univariate problem per node. Its solution
//! reproduces hierarchical shrinkage exactly, which makes ridge on this basis
//! an independent oracle for [`crate::shrinkage::apply_hs`]. Ridge on the
//! leaf one-hot basis plays the same role for leaf-based shrinkage.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::Dataset;
use crate::tree::TreeModel;

#[derive(Debug, Error)]
pub enum StumpError {
    #[error("node {0} is a leaf and has no stump")]
    LeafNode(usize),
    #[error("node {0} has an empty child")]
    EmptyChild(usize),
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("design has {rows} rows but response has {len} values")]
    LengthMismatch { rows: usize, len: usize },
    #[error("non-finite value in ridge input")]
    NonFiniteInput,
    #[error("lambda must be finite and non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("every grid point has effective df >= n = {n}")]
    DfExceedsN { n: usize },
    #[error("empty lambda grid")]
    EmptyGrid,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The stump basis of a fixed tree: one column per interior node, root first,
/// then in arena order.
#[derive(Debug, Clone)]
pub struct StumpFeatureMap<'a> {
    model: &'a TreeModel,
    interior: Vec<usize>,
    column_of: Vec<Option<usize>>,
    n_left: Vec<usize>,
    n_right: Vec<usize>,
    // psi value on the left / right child
    left_value: Vec<f64>,
    right_value: Vec<f64>,
}

impl<'a> StumpFeatureMap<'a> {
    pub fn new(model: &'a TreeModel) -> Result<Self, StumpError> {
        let mut column_of = vec![None; model.n_nodes()];
        let mut interior = Vec::new();
        let (mut n_left, mut n_right) = (Vec::new(), Vec::new());
        let (mut left_value, mut right_value) = (Vec::new(), Vec::new());
        for node in model.interior_nodes() {
            let (_, _, l, r) = node.split().expect("interior");
            let nl = model.node(l).n_samples;
            let nr = model.node(r).n_samples;
            if nl == 0 || nr == 0 {
                return Err(StumpError::EmptyChild(node.id));
            }
            column_of[node.id] = Some(interior.len());
            interior.push(node.id);
            n_left.push(nl);
            n_right.push(nr);
            let norm = ((nl as f64) * (nr as f64)).sqrt();
            left_value.push(nr as f64 / norm);
            right_value.push(-(nl as f64) / norm);
        }
        Ok(StumpFeatureMap {
            model,
            interior,
            column_of,
            n_left,
            n_right,
            left_value,
            right_value,
        })
    }

    pub fn model(&self) -> &TreeModel {
        self.model
    }

    /// Number of stumps `m` (interior nodes).
    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    /// Interior node ids in column order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// `(N(tL), N(tR))` for column `k`.
    pub fn child_counts(&self, k: usize) -> (usize, usize) {
        (self.n_left[k], self.n_right[k])
    }

    /// `N(t)` for column `k`.
    pub fn node_count(&self, k: usize) -> usize {
        self.n_left[k] + self.n_right[k]
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), StumpError> {
        if x.len() != self.model.n_features() {
            return Err(StumpError::DimensionMismatch {
                expected: self.model.n_features(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `psi_t(x)` for the interior node with id `node`.
    pub fn stump_value(&self, node: usize, x: &[f64]) -> Result<f64, StumpError> {
        let k = self
            .column_of
            .get(node)
            .copied()
            .flatten()
            .ok_or(StumpError::LeafNode(node))?;
        self.check_dim(x)?;
        let path = self.model.node_path(x).expect("dimension checked");
        Ok(match path.iter().position(|&id| id == node) {
            Some(pos) => {
                if Some(path[pos + 1]) == self.model.node(node).left {
                    self.left_value[k]
                } else {
                    self.right_value[k]
                }
            }
            None => 0.0,
        })
    }

    fn fill_row(&self, x: &[f64], mut set: impl FnMut(usize, f64)) {
        let mut id = 0;
        while let Some((f, thr, l, r)) = self.model.node(id).split() {
            let k = self.column_of[id].expect("interior");
            if x[f] <= thr {
                set(k, self.left_value[k]);
                id = l;
            } else {
                set(k, self.right_value[k]);
                id = r;
            }
        }
    }

    /// `Psi(x)` as a dense vector.
    pub fn row(&self, x: &[f64]) -> Result<Vec<f64>, StumpError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.len()];
        self.fill_row(x, |k, v| out[k] = v);
        Ok(out)
    }

    /// `Psi` evaluated on each row of `ds`: an `n x m` matrix.
    pub fn transform(&self, ds: &Dataset) -> Result<DMatrix<f64>, StumpError> {
        self.transform_rows(ds.rows())
    }

    pub fn transform_rows<'q>(&self, rows: impl IntoIterator<Item = &'q [f64]>) -> Result<DMatrix<f64>, StumpError> {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let mut out = DMatrix::zeros(rows.len(), self.len());
        for (i, x) in rows.iter().enumerate() {
            self.check_dim(x)?;
            self.fill_row(x, |k, v| out[(i, k)] = v);
        }
        Ok(out)
    }
}

/// Leaf-membership one-hot encoding: one column per leaf, in arena order.
pub fn leaf_onehot_transform(model: &TreeModel, ds: &Dataset) -> Result<DMatrix<f64>, StumpError> {
    leaf_onehot_rows(model, ds.rows())
}

fn leaf_onehot_rows<'q>(model: &TreeModel, rows: impl IntoIterator<Item = &'q [f64]>) -> Result<DMatrix<f64>, StumpError> {
    let mut column_of = vec![usize::MAX; model.n_nodes()];
    for (k, leaf) in model.leaves().enumerate() {
        column_of[leaf.id] = k;
    }
    let rows: Vec<&[f64]> = rows.into_iter().collect();
    let mut out = DMatrix::zeros(rows.len(), model.leaf_count());
    for (i, x) in rows.iter().enumerate() {
        if x.len() != model.n_features() {
            return Err(StumpError::DimensionMismatch {
                expected: model.n_features(),
                got: x.len(),
            });
        }
        out[(i, column_of[model.leaf_of(x)])] = 1.0;
    }
    Ok(out)
}

/// Ridge solution on a centered response with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub coefficients: Vec<f64>,
    /// Grand mean of the response.
    pub intercept: f64,
    pub lambda: f64,
    /// Trace of the hat matrix, intercept included.
    pub effective_df: f64,
}

impl RidgeFit {
    pub fn predict_row(&self, features: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(features)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<f64> {
        let beta = DVector::from_column_slice(&self.coefficients);
        let fitted = features * beta;
        fitted.iter().map(|v| v + self.intercept).collect()
    }
}

/// Minimizes `||y - mean(y) - X b||^2 + lambda ||b||^2`.
///
/// With `orthogonal_hint` the columns are assumed mutually orthogonal and
/// each coefficient is `<x_k, y_c> / (||x_k||^2 + lambda)`. Otherwise the
/// problem is solved by QR of the augmented design; a rank-deficient design
/// at `lambda = 0` gets the minimum-norm solution.
pub fn ridge_fit(features: &DMatrix<f64>, y: &[f64], lambda: f64, orthogonal_hint: bool) -> Result<RidgeFit, StumpError> {
    let (n, m) = features.shape();
    if n != y.len() {
        return Err(StumpError::LengthMismatch { rows: n, len: y.len() });
    }
    if n == 0 || features.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StumpError::NonFiniteInput);
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(StumpError::NegativeLambda(lambda));
    }
    let intercept = y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - intercept));

    if m == 0 {
        return Ok(RidgeFit {
            coefficients: Vec::new(),
            intercept,
            lambda,
            effective_df: 1.0,
        });
    }

    if orthogonal_hint {
        let mut coefficients = Vec::with_capacity(m);
        let mut df = 1.0;
        for col in features.column_iter() {
            let norm2 = col.norm_squared();
            let denom = norm2 + lambda;
            if denom > 0.0 {
                coefficients.push(col.dot(&yc) / denom);
                df += norm2 / denom;
            } else {
                coefficients.push(0.0);
            }
        }
        return Ok(RidgeFit {
            coefficients,
            intercept,
            lambda,
            effective_df: df,
        });
    }

    if let Some(fit) = ridge_qr(features, &yc, lambda) {
        return Ok(RidgeFit {
            intercept,
            ..fit
        });
    }

    // Rank-deficient design at lambda = 0: minimum-norm solution from the
    // eigendecomposition of the Gram matrix.
    let gram = features.tr_mul(features);
    let eigen = gram.symmetric_eigen();
    let e_max = eigen.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = (n.max(m) as f64) * f64::EPSILON * e_max;
    let xty = features.tr_mul(&yc);
    let mut beta = DVector::zeros(m);
    let mut df = 1.0;
    for (k, &e) in eigen.eigenvalues.iter().enumerate() {
        if e <= tol {
            continue;
        }
        let v = eigen.eigenvectors.column(k);
        beta += v * (v.dot(&xty) / (e + lambda));
        df += e / (e + lambda);
    }
    Ok(RidgeFit {
        coefficients: beta.iter().copied().collect(),
        intercept,
        lambda,
        effective_df: df,
    })
}

/// Householder QR of `[X; sqrt(lambda) I]`. `None` when that matrix is
/// numerically rank deficient.
fn ridge_qr(features: &DMatrix<f64>, yc: &DVector<f64>, lambda: f64) -> Option<RidgeFit> {
    let (n, m) = features.shape();
    let mut stacked = DMatrix::zeros(n + m, m);
    stacked.view_mut((0, 0), (n, m)).copy_from(features);
    for k in 0..m {
        stacked[(n + k, k)] = lambda.sqrt();
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(yc);
    let qr = stacked.qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = ((n + m) as f64) * f64::EPSILON * diag_max;
    if r.diagonal().iter().any(|v| v.abs() <= tol) {
        return None;
    }
    let qty = qr.q().tr_mul(&rhs);
    let beta = r.solve_upper_triangular(&qty)?;
    // trace of the hat matrix: m - lambda * ||R^-1||_F^2
    let df = if lambda > 0.0 {
        let r_inv = r.solve_upper_triangular(&DMatrix::identity(m, m))?;
        1.0 + m as f64 - lambda * r_inv.norm_squared()
    } else {
        1.0 + m as f64
    };
    Some(RidgeFit {
        coefficients: beta.iter().copied().collect(),
        intercept: 0.0,
        lambda,
        effective_df: df,
    })
}

/// Predictions of ridge regression on the stump basis built from
/// `(model, train)`. Agrees with hierarchical shrinkage when `train` is the
/// data the tree statistics were computed from.
pub fn hs_oracle_predict<'q>(
    model: &TreeModel,
    train: &Dataset,
    lambda: f64,
    queries: impl IntoIterator<Item = &'q [f64]>,
) -> Result<Vec<f64>, StumpError> {
    let map = StumpFeatureMap::new(model)?;
    let design = map.transform(train)?;
    let fit = ridge_fit(&design, train.responses(), lambda, false)?;
    Ok(fit.predict(&map.transform_rows(queries)?))
}

/// Same construction on the leaf one-hot basis; agrees with leaf-based shrinkage.
pub fn lbs_oracle_predict<'q>(
    model: &TreeModel,
    train: &Dataset,
    lambda: f64,
    queries: impl IntoIterator<Item = &'q [f64]>,
) -> Result<Vec<f64>, StumpError> {
    let design = leaf_onehot_transform(model, train)?;
    let fit = ridge_fit(&design, train.responses(), lambda, false)?;
    Ok(fit.predict(&leaf_onehot_rows(model, queries)?))
}

/// Per-node ridge coefficients on the stump basis, in column order.
pub fn stump_coefficients(model: &TreeModel, train: &Dataset, lambda: f64) -> Result<RidgeFit, StumpError> {
    let map = StumpFeatureMap::new(model)?;
    let design = map.transform(train)?;
    ridge_fit(&design, train.responses(), lambda, true)
}

/// Score of one grid point; `None` when the point was skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaScore {
    pub lambda: f64,
    pub score: Option<f64>,
    pub effective_df: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub scores: Vec<LambdaScore>,
}

/// Sufficient statistics of the decoupled ridge problems.
struct StumpMoments {
    n: usize,
    // <psi_k, y_c> and N(t_k)
    inner: Vec<f64>,
    counts: Vec<f64>,
    yc_norm2: f64,
}

impl StumpMoments {
    fn new(design: &DMatrix<f64>, y: &[f64]) -> Self {
        let n = y.len();
        let mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - mean));
        StumpMoments {
            n,
            inner: design.column_iter().map(|c| c.dot(&yc)).collect(),
            counts: design.column_iter().map(|c| c.norm_squared()).collect(),
            yc_norm2: yc.norm_squared(),
        }
    }

    fn df(&self, lambda: f64) -> f64 {
        1.0 + self
            .counts
            .iter()
            .map(|&c| if c + lambda > 0.0 { c / (c + lambda) } else { 0.0 })
            .sum::<f64>()
    }

    fn rss(&self, lambda: f64) -> f64 {
        let mut rss = self.yc_norm2;
        for (&c, &count) in self.inner.iter().zip(&self.counts) {
            let denom = count + lambda;
            if denom > 0.0 {
                let beta = c / denom;
                rss += beta * beta * count - 2.0 * beta * c;
            }
        }
        rss.max(0.0)
    }
}

fn check_grid(grid: &[f64]) -> Result<(), StumpError> {
    if grid.is_empty() {
        return Err(StumpError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(StumpError::NegativeLambda(bad));
    }
    Ok(())
}

/// Argmin over scored points; ties go to the larger lambda.
fn select(scores: Vec<LambdaScore>, n: usize) -> Result<LambdaSelection, StumpError> {
    let best = scores
        .iter()
        .filter_map(|s| s.score.map(|v| (s.lambda, v)))
        .fold(None::<(f64, f64)>, |acc, (lambda, v)| match acc {
            Some((bl, bv)) if v > bv || (v == bv && lambda <= bl) => Some((bl, bv)),
            _ => Some((lambda, v)),
        });
    match best {
        Some((lambda, _)) => Ok(LambdaSelection { lambda, scores }),
        None => Err(StumpError::DfExceedsN { n }),
    }
}

/// Generalized cross-validation over `grid` for hierarchical shrinkage of
/// `model`: `GCV = n RSS / (n - df)^2`. One stump design is built; each grid
/// point then costs O(m).
pub fn gcv_select_lambda(model: &TreeModel, train: &Dataset, grid: &[f64]) -> Result<LambdaSelection, StumpError> {
    check_grid(grid)?;
    let map = StumpFeatureMap::new(model)?;
    let moments = StumpMoments::new(&map.transform(train)?, train.responses());
    let n = moments.n as f64;
    let scores = grid
        .iter()
        .map(|&lambda| {
            let df = moments.df(lambda);
            let score = if df >= n {
                warn!("skipping lambda = {lambda}: effective df {df:.3} >= n = {n}");
                None
            } else {
                Some(n * moments.rss(lambda) / (n - df).powi(2))
            };
            LambdaScore {
                lambda,
                score,
                effective_df: df,
            }
        })
        .collect();
    select(scores, moments.n)
}

/// Exact leave-one-out error of the stump ridge, from the hat diagonal
/// `h_ii = 1/n + sum_k psi_k(x_i)^2 / (N(t_k) + lambda)`.
pub fn loocv_select_lambda(model: &TreeModel, train: &Dataset, grid: &[f64]) -> Result<LambdaSelection, StumpError> {
    check_grid(grid)?;
    let map = StumpFeatureMap::new(model)?;
    let design = map.transform(train)?;
    let y = train.responses();
    let n = y.len();
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fit = ridge_fit(&design, y, lambda, true)?;
        let mut total = 0.0;
        let mut ok = true;
        for (i, row) in design.row_iter().enumerate() {
            let mut h = 1.0 / n as f64;
            let mut fitted = fit.intercept;
            for (k, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    h += v * v / (map.node_count(k) as f64 + lambda);
                    fitted += fit.coefficients[k] * v;
                }
            }
            if h >= 1.0 - 1e-12 {
                ok = false;
                break;
            }
            total += ((y[i] - fitted) / (1.0 - h)).powi(2);
        }
        if !ok {
            warn!("skipping lambda = {lambda}: a training point has leverage 1");
        }
        scores.push(LambdaScore {
            lambda,
            score: ok.then(|| total / n as f64),
            effective_df: fit.effective_df,
        });
    }
    select(scores, n)
}

/// Writes `Psi(ds)` as CSV with one `psi_<node>` column per stump.
pub fn write_stump_matrix<W: Write>(map: &StumpFeatureMap, ds: &Dataset, writer: W) -> Result<(), StumpError> {
    let design = map.transform(ds)?;
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<String> = map.interior_nodes().iter().map(|id| format!("psi_{id}")).collect();
    wtr.write_record(&header)?;
    for row in design.row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes one line per stump: node id, child counts and coefficient.
pub fn write_coefficients<W: Write>(map: &StumpFeatureMap, fit: &RidgeFit, writer: W) -> Result<(), StumpError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["node", "n_left", "n_right", "lambda", "coefficient"])?;
    for (k, id) in map.interior_nodes().iter().enumerate() {
        let (nl, nr) = map.child_counts(k);
        wtr.write_record([
            id.to_string(),
            nl.to_string(),
            nr.to_string(),
            fit.lambda.to_string(),
            fit.coefficients[k].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
