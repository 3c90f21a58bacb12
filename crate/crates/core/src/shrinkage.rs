//! Post-hoc shrinkage of fitted trees.
//!
//! Hierarchical shrinkage (HS) rewrites each leaf value as the root mean plus
//! the parent-to-child mean increments along its path, each increment divided
//! by `1 + lambda / N(parent)`. Leaf-based shrinkage (LBS) instead pulls the
//! leaf mean toward the root mean by `1 + lambda / N(leaf)`. Both only rewrite
//! leaf values; the tree structure and node statistics are untouched and no
//! training data is needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Task;
use crate::forest::ForestModel;
use crate::tree::TreeModel;

#[derive(Debug, Error, PartialEq)]
pub enum ShrinkageError {
    #[error("lambda must be finite and non-negative, got {0}")]
    NegativeLambda(f64),
    #[error("node {0} has no usable statistics (N(t) = 0 or non-finite mean)")]
    MissingNodeStats(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkageKind {
    Hs,
    Lbs,
}

impl std::str::FromStr for ShrinkageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hs" => Ok(ShrinkageKind::Hs),
            "lbs" => Ok(ShrinkageKind::Lbs),
            other => Err(format!("unknown shrinkage kind `{other}` (expected hs or lbs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageSpec {
    pub kind: ShrinkageKind,
    pub lambda: f64,
}

impl ShrinkageSpec {
    pub fn new(kind: ShrinkageKind, lambda: f64) -> Result<Self, ShrinkageError> {
        check_lambda(lambda)?;
        Ok(ShrinkageSpec { kind, lambda })
    }

    pub fn hs(lambda: f64) -> Result<Self, ShrinkageError> {
        Self::new(ShrinkageKind::Hs, lambda)
    }

    pub fn lbs(lambda: f64) -> Result<Self, ShrinkageError> {
        Self::new(ShrinkageKind::Lbs, lambda)
    }

    pub fn apply(&self, model: &TreeModel) -> Result<TreeModel, ShrinkageError> {
        match self.kind {
            ShrinkageKind::Hs => apply_hs(model, self.lambda),
            ShrinkageKind::Lbs => apply_lbs(model, self.lambda),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<(), ShrinkageError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(ShrinkageError::NegativeLambda(lambda))
    }
}

fn check_stats(model: &TreeModel) -> Result<(), ShrinkageError> {
    match model
        .nodes()
        .iter()
        .find(|n| n.n_samples == 0 || !n.node_mean.is_finite())
    {
        Some(node) => Err(ShrinkageError::MissingNodeStats(node.id)),
        None => Ok(()),
    }
}

fn finish(model: &TreeModel, mut values: Vec<f64>, spec: ShrinkageSpec) -> TreeModel {
    if model.task() == Task::Classification {
        for v in values.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    model.with_leaf_values(&values, Some(spec))
}

/// Hierarchical shrinkage in one pass over the node arena.
pub fn apply_hs(model: &TreeModel, lambda: f64) -> Result<TreeModel, ShrinkageError> {
    check_lambda(lambda)?;
    check_stats(model)?;
    let nodes = model.nodes();
    let mut values = vec![0.0; nodes.len()];
    values[0] = nodes[0].node_mean;
    // Parents precede children in the arena.
    for node in nodes {
        if let Some((_, _, l, r)) = node.split() {
            let damping = 1.0 + lambda / node.n_samples as f64;
            for child in [l, r] {
                values[child] = values[node.id] + (nodes[child].node_mean - node.node_mean) / damping;
            }
        }
    }
    Ok(finish(model, values, ShrinkageSpec { kind: ShrinkageKind::Hs, lambda }))
}

/// Leaf-based shrinkage.
pub fn apply_lbs(model: &TreeModel, lambda: f64) -> Result<TreeModel, ShrinkageError> {
    check_lambda(lambda)?;
    check_stats(model)?;
    let root = model.root_mean();
    let values = model
        .nodes()
        .iter()
        .map(|n| root + (n.node_mean - root) / (1.0 + lambda / n.n_samples as f64))
        .collect();
    Ok(finish(model, values, ShrinkageSpec { kind: ShrinkageKind::Lbs, lambda }))
}

/// Applies the transform to every tree of the forest; aggregation is unchanged.
pub fn shrink_forest(forest: &ForestModel, lambda: f64, kind: ShrinkageKind) -> Result<ForestModel, ShrinkageError> {
    let spec = ShrinkageSpec::new(kind, lambda)?;
    let trees = forest
        .trees()
        .par_iter()
        .map(|t| spec.apply(t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(forest.with_trees(trees))
}
