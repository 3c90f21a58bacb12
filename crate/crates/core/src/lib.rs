//! Decision trees and random forests with post-hoc hierarchical shrinkage.
//!
//! ```
//! use shrinkwood::data::gen_friedman1;
//! use shrinkwood::shrinkage::apply_hs;
//! use shrinkwood::tree::{fit_cart, TreeParams};
//!
//! let train = gen_friedman1(200, 1.0, 0).unwrap();
//! let tree = fit_cart(&train, &TreeParams::with_max_leaves(16)).unwrap();
//! let shrunk = apply_hs(&tree, 10.0).unwrap();
//! assert_eq!(shrunk.leaf_count(), tree.leaf_count());
//! ```

pub mod data;
pub mod eval;
pub mod forest;
pub mod shrinkage;
pub mod stumpspace;
pub mod tree;

pub use data::{Dataset, Task};
pub use forest::{fit_rf, ForestModel, ForestParams};
pub use shrinkage::{apply_hs, apply_lbs, shrink_forest, ShrinkageKind, ShrinkageSpec};
pub use tree::{fit_cart, TreeModel, TreeParams};

/// Anything that maps a feature row to a prediction (a probability of class 1
/// for classification).
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;
    fn task(&self) -> Task;
    /// `x` must have length [`Predictor::n_features`].
    fn predict_row(&self, x: &[f64]) -> f64;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Tree(#[from] tree::TreeError),
    #[error(transparent)]
    Shrinkage(#[from] shrinkage::ShrinkageError),
    #[error(transparent)]
    Stump(#[from] stumpspace::StumpError),
    #[error(transparent)]
    Forest(#[from] forest::ForestError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}
