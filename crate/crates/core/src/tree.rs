//! CART trees grown best-first to a leaf budget, cost-complexity pruning,
//! and prediction by routing or by the telescoping node-mean sum.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Task};
use crate::shrinkage::ShrinkageSpec;
use crate::Predictor;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("cannot fit a tree on an empty dataset")]
    EmptyDataset,
    #[error("query has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("pruning penalty must be a non-negative number, got {0}")]
    NegativeAlpha(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed tree: {0}")]
    Malformed(String),
}

/// One node of the arena. Interior nodes carry a split; leaves carry none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub split_feature: Option<usize>,
    pub threshold: Option<f64>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub n_samples: usize,
    pub node_mean: f64,
    /// Variance for regression, Gini index for classification.
    pub impurity: f64,
    pub depth: usize,
    #[serde(default)]
    pub leaf_value_override: Option<f64>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }

    /// `(feature, threshold, left, right)` for interior nodes.
    pub fn split(&self) -> Option<(usize, f64, usize, usize)> {
        Some((self.split_feature?, self.threshold?, self.left?, self.right?))
    }

    /// N(t) times impurity: SSE for regression, weighted Gini for classification.
    pub fn risk(&self) -> f64 {
        self.n_samples as f64 * self.impurity
    }

    fn leaf(id: usize, parent: Option<usize>, depth: usize, stats: NodeStats) -> Self {
        TreeNode {
            id,
            parent,
            split_feature: None,
            threshold: None,
            left: None,
            right: None,
            n_samples: stats.n,
            node_mean: stats.mean,
            impurity: stats.impurity,
            depth,
            leaf_value_override: None,
        }
    }
}

/// A fitted binary tree. The root is always node 0 and every parent precedes
/// its children in `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeDocument", into = "TreeDocument")]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
    task: Task,
    n_features: usize,
    feature_names: Vec<String>,
    leaf_count: usize,
    shrinkage: Option<ShrinkageSpec>,
}

/// Growth parameters for [`fit_cart`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Leaf budget `m`; `None` grows until no admissible split remains.
    pub max_leaves: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Number of features drawn per node; `None` considers all.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_leaves: None,
            min_leaf: 1,
            max_depth: None,
            mtry: None,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn with_max_leaves(max_leaves: usize) -> Self {
        TreeParams {
            max_leaves: Some(max_leaves),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct NodeStats {
    n: usize,
    mean: f64,
    impurity: f64,
    pure: bool,
}

fn node_stats(y: &[f64], samples: &[u32], task: Task) -> NodeStats {
    let n = samples.len();
    let mean = samples.iter().map(|&i| y[i as usize]).sum::<f64>() / n as f64;
    let first = y[samples[0] as usize];
    let pure = samples.iter().all(|&i| y[i as usize] == first);
    let impurity = if pure {
        0.0
    } else {
        match task {
            Task::Regression => {
                samples
                    .iter()
                    .map(|&i| (y[i as usize] - mean).powi(2))
                    .sum::<f64>()
                    / n as f64
            }
            Task::Classification => 2.0 * mean * (1.0 - mean),
        }
    };
    NodeStats {
        n,
        mean,
        impurity,
        pure,
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    /// Decrease of N(t) * impurity.
    gain: f64,
}

struct Frontier {
    gain: f64,
    node: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // Max-heap on gain; among equal gains the lower node id pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct Grower<'a> {
    ds: &'a Dataset,
    y: &'a [f64],
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    // Per pending node: sample indices sorted by each feature.
    sorted: Vec<Option<Vec<Vec<u32>>>>,
    best: Vec<Option<SplitCandidate>>,
    goes_left: Vec<bool>,
}

impl<'a> Grower<'a> {
    fn push_node(&mut self, parent: Option<usize>, depth: usize, sorted: Vec<Vec<u32>>) -> usize {
        let id = self.nodes.len();
        let stats = node_stats(self.y, &sorted[0], self.ds.task());
        self.nodes.push(TreeNode::leaf(id, parent, depth, stats));
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let best = if !stats.pure && depth_ok && stats.n >= 2 * self.params.min_leaf {
            self.best_split(&sorted, stats)
        } else {
            None
        };
        self.best.push(best);
        self.sorted.push(best.map(|_| sorted));
        id
    }

    fn candidate_features(&mut self, sorted: &[Vec<u32>]) -> Vec<usize> {
        let p = self.ds.n_features();
        let varies = |f: usize| {
            let s = &sorted[f];
            self.ds.value(s[0] as usize, f) < self.ds.value(s[s.len() - 1] as usize, f)
        };
        match self.params.mtry {
            Some(mtry) if mtry < p => {
                // Draw features until `mtry` non-constant ones have been seen.
                let mut order: Vec<usize> = (0..p).collect();
                order.shuffle(&mut self.rng);
                let mut chosen = Vec::with_capacity(mtry);
                for f in order {
                    if varies(f) {
                        chosen.push(f);
                        if chosen.len() == mtry {
                            break;
                        }
                    }
                }
                chosen.sort_unstable();
                chosen
            }
            _ => (0..p).filter(|&f| varies(f)).collect(),
        }
    }

    fn best_split(&mut self, sorted: &[Vec<u32>], stats: NodeStats) -> Option<SplitCandidate> {
        let features = self.candidate_features(sorted);
        let n = stats.n;
        let min_leaf = self.params.min_leaf;
        let total: f64 = sorted[0].iter().map(|&i| self.y[i as usize]).sum();
        let parent_term = total * total / n as f64;
        // Weighted Gini decrease is twice the SSE decrease for 0/1 responses.
        let scale = match self.ds.task() {
            Task::Regression => 1.0,
            Task::Classification => 2.0,
        };
        let risk = stats.n as f64 * stats.impurity;
        let tol = 1e-10 * risk;

        let mut best: Option<SplitCandidate> = None;
        for f in features {
            let order = &sorted[f];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let i = order[k] as usize;
                left_sum += self.y[i];
                let n_left = k + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let lo = self.ds.value(i, f);
                let hi = self.ds.value(order[k + 1] as usize, f);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = scale
                    * (left_sum * left_sum / n_left as f64
                        + right_sum * right_sum / (n - n_left) as f64
                        - parent_term);
                let better = match best {
                    None => gain > tol,
                    Some(b) => gain > b.gain + 1e-12 * b.gain.abs(),
                };
                if better {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitCandidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn split(&mut self, node: usize) {
        let cand = self.best[node].take().expect("frontier node has a split");
        let sorted = self.sorted[node].take().expect("frontier node keeps its samples");
        let f = cand.feature;
        for &i in &sorted[f] {
            self.goes_left[i as usize] = self.ds.value(i as usize, f) <= cand.threshold;
        }
        let n_left = sorted[f].iter().filter(|&&i| self.goes_left[i as usize]).count();
        let mut left_lists = Vec::with_capacity(sorted.len());
        let mut right_lists = Vec::with_capacity(sorted.len());
        for list in sorted {
            let mut l = Vec::with_capacity(n_left);
            let mut r = Vec::with_capacity(list.len() - n_left);
            for i in list {
                if self.goes_left[i as usize] {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            left_lists.push(l);
            right_lists.push(r);
        }
        let depth = self.nodes[node].depth + 1;
        let left = self.push_node(Some(node), depth, left_lists);
        let right = self.push_node(Some(node), depth, right_lists);
        let parent = &mut self.nodes[node];
        parent.split_feature = Some(f);
        parent.threshold = Some(cand.threshold);
        parent.left = Some(left);
        parent.right = Some(right);
    }
}

/// Grows a CART tree best-first: the frontier leaf with the largest decrease
/// in N(t) * impurity is split next, until the leaf budget is reached or no
/// admissible split remains.
pub fn fit_cart(train: &Dataset, params: &TreeParams) -> Result<TreeModel, TreeError> {
    let n = train.n_samples();
    if n == 0 {
        return Err(TreeError::EmptyDataset);
    }
    if params.min_leaf == 0 {
        return Err(TreeError::InvalidParameter("min_leaf must be at least 1".into()));
    }
    if params.max_leaves == Some(0) {
        return Err(TreeError::InvalidParameter("max_leaves must be at least 1".into()));
    }
    if let Some(mtry) = params.mtry {
        if mtry == 0 || mtry > train.n_features() {
            return Err(TreeError::InvalidParameter(format!(
                "mtry = {mtry} outside 1..={}",
                train.n_features()
            )));
        }
    }
    let p = train.n_features();
    let root_lists: Vec<Vec<u32>> = (0..p)
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| train.value(a as usize, f).total_cmp(&train.value(b as usize, f)));
            idx
        })
        .collect();

    let mut grower = Grower {
        ds: train,
        y: train.responses(),
        params,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
        sorted: Vec::new(),
        best: Vec::new(),
        goes_left: vec![false; n],
    };
    let root = grower.push_node(None, 0, root_lists);
    let mut heap = BinaryHeap::new();
    if let Some(c) = grower.best[root] {
        heap.push(Frontier { gain: c.gain, node: root });
    }
    let budget = params.max_leaves.unwrap_or(usize::MAX);
    let mut leaves = 1;
    while leaves < budget {
        let Some(Frontier { node, .. }) = heap.pop() else {
            break;
        };
        grower.split(node);
        leaves += 1;
        for child in [grower.nodes[node].left, grower.nodes[node].right].into_iter().flatten() {
            if let Some(c) = grower.best[child] {
                heap.push(Frontier { gain: c.gain, node: child });
            }
        }
    }

    Ok(TreeModel {
        leaf_count: leaves,
        nodes: grower.nodes,
        task: train.task(),
        n_features: p,
        feature_names: train.feature_names().to_vec(),
        shrinkage: None,
    })
}

/// One entry of the minimal cost-complexity pruning sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruningStep {
    pub alpha: f64,
    pub leaf_count: usize,
}

/// The weakest-link sequence plus, per node, the step at which it is
/// collapsed into a leaf (`usize::MAX` for leaves of the full tree).
struct PruningSequence {
    steps: Vec<PruningStep>,
    collapse_step: Vec<usize>,
}

impl TreeModel {
    /// Builds a model from an explicit node arena, checking well-formedness.
    pub fn from_nodes(
        nodes: Vec<TreeNode>,
        task: Task,
        n_features: usize,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self, TreeError> {
        let feature_names = feature_names.unwrap_or_else(|| crate::data::default_names(n_features));
        let mut model = TreeModel {
            leaf_count: 0,
            nodes,
            task,
            n_features,
            feature_names,
            shrinkage: None,
        };
        model.leaf_count = model.validate()?;
        Ok(model)
    }

    /// Checks structural invariants and returns the leaf count.
    pub fn validate(&self) -> Result<usize, TreeError> {
        let bad = |msg: String| Err(TreeError::Malformed(msg));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.feature_names.len() != self.n_features {
            return bad("feature name count does not match n_features".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        let mut leaves = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return bad(format!("node at position {i} has id {}", node.id));
            }
            if (i == 0) != node.parent.is_none() {
                return bad(format!("node {i}: only the root may lack a parent"));
            }
            if !node.node_mean.is_finite() || !(node.impurity >= 0.0) {
                return bad(format!("node {i}: non-finite statistics"));
            }
            let has = [
                node.split_feature.is_some(),
                node.threshold.is_some(),
                node.left.is_some(),
                node.right.is_some(),
            ];
            match has {
                [true, true, true, true] => {
                    let (f, thr, l, r) = node.split().expect("checked");
                    if f >= self.n_features || !thr.is_finite() {
                        return bad(format!("node {i}: bad split"));
                    }
                    for c in [l, r] {
                        if c <= i || c >= self.nodes.len() {
                            return bad(format!("node {i}: child {c} out of order"));
                        }
                        if seen[c] {
                            return bad(format!("node {c} reachable twice"));
                        }
                        seen[c] = true;
                        if self.nodes[c].parent != Some(i) {
                            return bad(format!("node {c}: parent link mismatch"));
                        }
                        if self.nodes[c].depth != node.depth + 1 {
                            return bad(format!("node {c}: depth mismatch"));
                        }
                    }
                    if self.nodes[l].n_samples + self.nodes[r].n_samples != node.n_samples {
                        return bad(format!("node {i}: N(t) != N(left) + N(right)"));
                    }
                    if node.leaf_value_override.is_some() {
                        return bad(format!("interior node {i} carries a leaf override"));
                    }
                }
                [false, false, false, false] => leaves += 1,
                _ => return bad(format!("node {i}: partial split fields")),
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        if self.nodes[0].depth != 0 {
            return bad("root depth must be 0".into());
        }
        let overridden = self
            .nodes
            .iter()
            .filter(|n| n.is_leaf() && n.leaf_value_override.is_some())
            .count();
        if overridden != 0 && overridden != leaves {
            return bad("leaf overrides must cover all leaves or none".into());
        }
        Ok(leaves)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn root_mean(&self) -> f64 {
        self.nodes[0].node_mean
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// The shrinkage that produced the leaf overrides, if any.
    pub fn shrinkage(&self) -> Option<ShrinkageSpec> {
        self.shrinkage
    }

    pub fn has_override(&self) -> bool {
        self.nodes.iter().any(|n| n.leaf_value_override.is_some())
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(|n| !n.is_leaf())
    }

    /// Returns a copy with the given per-node leaf values installed.
    /// `values` is indexed by node id; entries for interior nodes are ignored.
    pub(crate) fn with_leaf_values(&self, values: &[f64], spec: Option<ShrinkageSpec>) -> TreeModel {
        let mut out = self.clone();
        for node in out.nodes.iter_mut() {
            node.leaf_value_override = node.is_leaf().then(|| values[node.id]);
        }
        out.shrinkage = spec;
        out
    }

    /// A copy with leaf overrides removed.
    pub fn without_override(&self) -> TreeModel {
        let mut out = self.clone();
        for node in out.nodes.iter_mut() {
            node.leaf_value_override = None;
        }
        out.shrinkage = None;
        out
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), TreeError> {
        if x.len() != self.n_features {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            let node = &self.nodes[id];
            match node.split() {
                Some((f, thr, l, r)) => id = if x[f] <= thr { l } else { r },
                None => return id,
            }
        }
    }

    #[inline]
    pub(crate) fn leaf_value(&self, leaf: usize) -> f64 {
        let node = &self.nodes[leaf];
        node.leaf_value_override.unwrap_or(node.node_mean)
    }

    /// Leaf value for `x` (override when present). For classification this
    /// is the class-1 probability.
    pub fn predict(&self, x: &[f64]) -> Result<f64, TreeError> {
        self.check_dim(x)?;
        Ok(self.leaf_value(self.leaf_of(x)))
    }

    /// Root mean plus the parent-to-child mean increments along the path of
    /// `x`. Ignores leaf overrides.
    pub fn predict_telescoping(&self, x: &[f64]) -> Result<f64, TreeError> {
        let path = self.node_path(x)?;
        let mut value = self.nodes[path[0]].node_mean;
        for pair in path.windows(2) {
            value += self.nodes[pair[1]].node_mean - self.nodes[pair[0]].node_mean;
        }
        Ok(value)
    }

    /// Node ids from the root to the leaf containing `x`.
    pub fn node_path(&self, x: &[f64]) -> Result<Vec<usize>, TreeError> {
        self.check_dim(x)?;
        let mut path = vec![0];
        let mut id = 0;
        while let Some((f, thr, l, r)) = self.nodes[id].split() {
            id = if x[f] <= thr { l } else { r };
            path.push(id);
        }
        Ok(path)
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>, TreeError> {
        self.check_dim(ds.row(0))?;
        Ok(ds.rows().map(|x| self.leaf_value(self.leaf_of(x))).collect())
    }

    /// Keeps the nodes not strictly below a collapsed node; collapsed nodes
    /// become leaves. Statistics are preserved; overrides are dropped.
    fn collapse(&self, collapsed: impl Fn(usize) -> bool) -> TreeModel {
        let mut keep = vec![false; self.nodes.len()];
        let mut is_leaf = vec![false; self.nodes.len()];
        keep[0] = true;
        for node in &self.nodes {
            if !keep[node.id] {
                continue;
            }
            if node.is_leaf() || collapsed(node.id) {
                is_leaf[node.id] = true;
            } else {
                keep[node.left.unwrap()] = true;
                keep[node.right.unwrap()] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (i, k) in keep.iter().enumerate() {
            if *k {
                remap[i] = next;
                next += 1;
            }
        }
        let mut nodes = Vec::with_capacity(next);
        for node in self.nodes.iter().filter(|n| keep[n.id]) {
            let mut out = node.clone();
            out.id = remap[node.id];
            out.parent = node.parent.map(|p| remap[p]);
            out.leaf_value_override = None;
            if is_leaf[node.id] {
                out.split_feature = None;
                out.threshold = None;
                out.left = None;
                out.right = None;
            } else {
                out.left = node.left.map(|c| remap[c]);
                out.right = node.right.map(|c| remap[c]);
            }
            nodes.push(out);
        }
        let leaf_count = nodes.iter().filter(|n| n.is_leaf()).count();
        TreeModel {
            nodes,
            task: self.task,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            leaf_count,
            shrinkage: None,
        }
    }

    fn pruning_sequence(&self) -> PruningSequence {
        let m = self.nodes.len();
        let mut collapse_step = vec![usize::MAX; m];
        let mut steps = vec![PruningStep {
            alpha: 0.0,
            leaf_count: self.leaf_count,
        }];
        let mut subtree_risk = vec![0.0; m];
        let mut subtree_leaves = vec![0usize; m];
        let mut g = vec![f64::INFINITY; m];
        let mut step = 0;
        loop {
            // Children have larger ids than parents, so a reverse sweep is post-order.
            for id in (0..m).rev() {
                let node = &self.nodes[id];
                if node.is_leaf() || collapse_step[id] != usize::MAX {
                    subtree_risk[id] = node.risk();
                    subtree_leaves[id] = 1;
                    g[id] = f64::INFINITY;
                } else {
                    let (l, r) = (node.left.unwrap(), node.right.unwrap());
                    subtree_risk[id] = subtree_risk[l] + subtree_risk[r];
                    subtree_leaves[id] = subtree_leaves[l] + subtree_leaves[r];
                    g[id] = (node.risk() - subtree_risk[id]) / (subtree_leaves[id] - 1) as f64;
                }
            }
            if subtree_leaves[0] == 1 {
                break;
            }
            // Only nodes inside the current subtree are eligible.
            let mut live = vec![false; m];
            live[0] = true;
            let mut alpha = f64::INFINITY;
            for id in 0..m {
                if !live[id] || collapse_step[id] != usize::MAX {
                    continue;
                }
                if let Some((_, _, l, r)) = self.nodes[id].split() {
                    live[l] = true;
                    live[r] = true;
                    alpha = alpha.min(g[id]);
                }
            }
            let prev = steps.last().expect("nonempty").alpha;
            let alpha = alpha.max(prev);
            let tol = 1e-10 * alpha.abs();
            let merge = alpha - prev <= tol;
            if !merge {
                step += 1;
            }
            for id in 0..m {
                if live[id] && collapse_step[id] == usize::MAX && !self.nodes[id].is_leaf() && g[id] <= alpha + tol {
                    collapse_step[id] = step;
                }
            }
            let leaf_count = self.count_leaves_at(&collapse_step, step);
            if merge {
                steps.last_mut().expect("nonempty").leaf_count = leaf_count;
            } else {
                steps.push(PruningStep { alpha, leaf_count });
            }
        }
        PruningSequence {
            steps,
            collapse_step,
        }
    }

    fn count_leaves_at(&self, collapse_step: &[usize], step: usize) -> usize {
        let mut live = vec![false; self.nodes.len()];
        live[0] = true;
        let mut leaves = 0;
        for node in &self.nodes {
            if !live[node.id] {
                continue;
            }
            match node.split() {
                Some((_, _, l, r)) if collapse_step[node.id] > step => {
                    live[l] = true;
                    live[r] = true;
                }
                _ => leaves += 1,
            }
        }
        leaves
    }

    /// Minimal cost-complexity pruning path: `alpha` strictly increasing from
    /// 0 (the full tree) to the root-only tree.
    pub fn ccp_path(&self) -> Vec<PruningStep> {
        self.pruning_sequence().steps
    }

    /// The minimal cost-complexity subtree for penalty `alpha`.
    pub fn prune_ccp(&self, alpha: f64) -> Result<TreeModel, TreeError> {
        if !(alpha >= 0.0) {
            return Err(TreeError::NegativeAlpha(alpha));
        }
        let seq = self.pruning_sequence();
        let step = seq.steps.iter().rposition(|s| s.alpha <= alpha).unwrap_or(0);
        Ok(self.collapse(|id| seq.collapse_step[id] <= step))
    }

    /// The largest subtree on the pruning path with at most `m` leaves.
    pub fn prune_to_leaves(&self, m: usize) -> TreeModel {
        let seq = self.pruning_sequence();
        let step = seq
            .steps
            .iter()
            .position(|s| s.leaf_count <= m)
            .unwrap_or(seq.steps.len() - 1);
        self.collapse(|id| seq.collapse_step[id] <= step)
    }
}

/// Grows an unrestricted tree, then prunes it along the cost-complexity path
/// to the largest subtree with at most `m` leaves.
pub fn fit_cart_to_m_leaves_via_ccp(train: &Dataset, m: usize, min_leaf: usize) -> Result<TreeModel, TreeError> {
    if m == 0 {
        return Err(TreeError::InvalidParameter("m must be at least 1".into()));
    }
    let full = fit_cart(
        train,
        &TreeParams {
            min_leaf,
            ..Default::default()
        },
    )?;
    Ok(full.prune_to_leaves(m))
}

impl Predictor for TreeModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn task(&self) -> Task {
        self.task
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        self.leaf_value(self.leaf_of(x))
    }
}

pub const TREE_FORMAT: &str = "shrinkwood.tree";
pub const FORMAT_VERSION: u32 = 1;

/// On-disk form of a [`TreeModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDocument {
    pub format: String,
    pub version: u32,
    pub task: Task,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub shrinkage: Option<ShrinkageSpec>,
    pub nodes: Vec<TreeNode>,
}

impl From<TreeModel> for TreeDocument {
    fn from(model: TreeModel) -> Self {
        TreeDocument {
            format: TREE_FORMAT.into(),
            version: FORMAT_VERSION,
            task: model.task,
            n_features: model.n_features,
            feature_names: model.feature_names,
            shrinkage: model.shrinkage,
            nodes: model.nodes,
        }
    }
}

impl TryFrom<TreeDocument> for TreeModel {
    type Error = TreeError;

    fn try_from(doc: TreeDocument) -> Result<Self, Self::Error> {
        if doc.format != TREE_FORMAT {
            return Err(TreeError::Malformed(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(TreeError::Malformed(format!("unsupported version {}", doc.version)));
        }
        let mut model = TreeModel::from_nodes(doc.nodes, doc.task, doc.n_features, Some(doc.feature_names))?;
        model.shrinkage = doc.shrinkage;
        Ok(model)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::gen_friedman1;

    /// x = (1, 2, 3, 4), y = (0, 0, 2, 2).
    pub(crate) fn four_point() -> Dataset {
        Dataset::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]], vec![0.0, 0.0, 2.0, 2.0], Task::Regression)
            .unwrap()
    }

    pub(crate) fn four_point_tree() -> TreeModel {
        fit_cart(&four_point(), &TreeParams::with_max_leaves(2)).unwrap()
    }

    #[test]
    fn four_point_split() {
        let tree = four_point_tree();
        assert_eq!(tree.leaf_count(), 2);
        let root = tree.node(0);
        assert_eq!(root.split_feature, Some(0));
        assert_eq!(root.threshold, Some(2.5));
        assert_eq!(root.node_mean, 1.0);
        assert_eq!(root.n_samples, 4);
        assert_eq!(tree.node(root.left.unwrap()).node_mean, 0.0);
        assert_eq!(tree.node(root.right.unwrap()).node_mean, 2.0);
        assert_eq!(tree.predict(&[1.0]).unwrap(), 0.0);
        assert_eq!(tree.predict(&[4.0]).unwrap(), 2.0);
        assert_eq!(tree.predict_telescoping(&[1.0]).unwrap(), 0.0);
        assert_eq!(tree.node_path(&[4.0]).unwrap(), vec![0, root.right.unwrap()]);
    }

    #[test]
    fn exhaustive_threshold_search_agrees() {
        // Weighted variance of every candidate threshold, computed directly.
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, 0.0, 2.0, 2.0];
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|y| (y - m).powi(2)).sum::<f64>()
        };
        let best = [1.5, 2.5, 3.5]
            .into_iter()
            .min_by(|&a, &b| {
                let cost = |t: f64| {
                    let l: Vec<f64> = xs.iter().zip(&ys).filter(|(x, _)| **x <= t).map(|(_, y)| *y).collect();
                    let r: Vec<f64> = xs.iter().zip(&ys).filter(|(x, _)| **x > t).map(|(_, y)| *y).collect();
                    sse(&l) + sse(&r)
                };
                cost(a).total_cmp(&cost(b))
            })
            .unwrap();
        assert_eq!(four_point_tree().node(0).threshold, Some(best));
    }

    #[test]
    fn constant_response_gives_single_leaf() {
        let ds = Dataset::from_rows(
            &(0..10).map(|i| vec![i as f64, (i * i) as f64]).collect::<Vec<_>>(),
            vec![0.1; 10],
            Task::Regression,
        )
        .unwrap();
        let tree = fit_cart(&ds, &TreeParams::with_max_leaves(8)).unwrap();
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.node(0).impurity, 0.0);
    }

    #[test]
    fn single_leaf_budget() {
        let ds = gen_friedman1(50, 1.0, 3).unwrap();
        let tree = fit_cart(&ds, &TreeParams::with_max_leaves(1)).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        for x in ds.rows() {
            assert!((tree.predict(x).unwrap() - ds.mean_response()).abs() < 1e-12);
            assert_eq!(tree.predict_telescoping(x).unwrap(), tree.predict(x).unwrap());
            assert_eq!(tree.node_path(x).unwrap(), vec![0]);
        }
    }

    #[test]
    fn leaf_budget_and_leaf_means() {
        let ds = gen_friedman1(200, 1.0, 4).unwrap();
        let tree = fit_cart(&ds, &TreeParams::with_max_leaves(15)).unwrap();
        assert_eq!(tree.leaf_count(), 15);
        // Prediction at each training row is the mean of rows sharing its leaf.
        let leaf_of: Vec<usize> = ds.rows().map(|x| tree.leaf_of(x)).collect();
        for (i, &leaf) in leaf_of.iter().enumerate() {
            let members: Vec<f64> = leaf_of
                .iter()
                .zip(ds.responses())
                .filter(|(l, _)| **l == leaf)
                .map(|(_, y)| *y)
                .collect();
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            assert!((tree.predict(ds.row(i)).unwrap() - mean).abs() < 1e-12);
            assert_eq!(tree.node(leaf).n_samples, members.len());
        }
    }

    #[test]
    fn dimension_mismatch() {
        let tree = four_point_tree();
        assert!(matches!(
            tree.predict(&[1.0, 2.0]),
            Err(TreeError::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(tree.predict_telescoping(&[]).is_err());
        assert!(tree.node_path(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn min_leaf_respected() {
        let ds = gen_friedman1(100, 1.0, 8).unwrap();
        let tree = fit_cart(
            &ds,
            &TreeParams {
                min_leaf: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(tree.leaves().all(|l| l.n_samples >= 7));
    }

    #[test]
    fn max_depth_respected() {
        let ds = gen_friedman1(100, 1.0, 8).unwrap();
        let tree = fit_cart(
            &ds,
            &TreeParams {
                max_depth: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(tree.depth() <= 3);
        assert!(tree.leaf_count() <= 8);
    }

    #[test]
    fn ccp_four_point() {
        let tree = four_point_tree();
        let path = tree.ccp_path();
        assert_eq!(
            path,
            vec![
                PruningStep { alpha: 0.0, leaf_count: 2 },
                PruningStep { alpha: 4.0, leaf_count: 1 }
            ]
        );
        assert_eq!(tree.prune_ccp(0.0).unwrap(), tree);
        assert_eq!(tree.prune_ccp(4.0 + 1e-9).unwrap().n_nodes(), 1);
        assert_eq!(tree.prune_ccp(f64::INFINITY).unwrap().n_nodes(), 1);
        assert!(matches!(tree.prune_ccp(-1.0), Err(TreeError::NegativeAlpha(_))));
        assert!(matches!(tree.prune_ccp(f64::NAN), Err(TreeError::NegativeAlpha(_))));

        let root_only = fit_cart(&four_point(), &TreeParams::with_max_leaves(1)).unwrap();
        assert_eq!(root_only.ccp_path(), vec![PruningStep { alpha: 0.0, leaf_count: 1 }]);
    }

    #[test]
    fn ccp_path_monotone_and_replayable() {
        let ds = gen_friedman1(150, 1.0, 21).unwrap();
        let tree = fit_cart(&ds, &TreeParams::default()).unwrap();
        let path = tree.ccp_path();
        assert_eq!(path[0], PruningStep { alpha: 0.0, leaf_count: tree.leaf_count() });
        assert_eq!(path.last().unwrap().leaf_count, 1);
        for w in path.windows(2) {
            assert!(w[1].alpha > w[0].alpha);
            assert!(w[1].leaf_count < w[0].leaf_count);
            let mid = 0.5 * (w[0].alpha + w[1].alpha);
            let pruned = tree.prune_ccp(mid).unwrap();
            assert_eq!(pruned.leaf_count(), w[0].leaf_count);
            pruned.validate().unwrap();
        }
    }

    #[test]
    fn ccp_to_m_leaves() {
        let ds = gen_friedman1(120, 1.0, 2).unwrap();
        let full = fit_cart(&ds, &TreeParams::default()).unwrap();
        let t = fit_cart_to_m_leaves_via_ccp(&ds, full.leaf_count() + 5, 1).unwrap();
        assert_eq!(t, full);
        assert_eq!(fit_cart_to_m_leaves_via_ccp(&ds, 1, 1).unwrap().n_nodes(), 1);
        let t8 = fit_cart_to_m_leaves_via_ccp(&ds, 8, 1).unwrap();
        let t15 = fit_cart_to_m_leaves_via_ccp(&ds, 15, 1).unwrap();
        assert!(t8.leaf_count() <= 8);
        assert!(t15.leaf_count() <= 15);
        assert!(t8.leaf_count() <= t15.leaf_count());
    }

    #[test]
    fn classification_means_are_probabilities() {
        let ds = crate::data::gen_blobs(200, 2.0, 0.1, 5).unwrap();
        let tree = fit_cart(&ds, &TreeParams::with_max_leaves(20)).unwrap();
        for node in tree.nodes() {
            assert!((0.0..=1.0).contains(&node.node_mean));
            let gini = 2.0 * node.node_mean * (1.0 - node.node_mean);
            assert!((node.impurity - gini).abs() < 1e-12);
        }
        let path = tree.ccp_path();
        assert_eq!(path.last().unwrap().leaf_count, 1);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ds = gen_friedman1(80, 1.0, 6).unwrap();
        let tree = fit_cart(&ds, &TreeParams::with_max_leaves(12)).unwrap();
        let text = serde_json::to_string(&tree).unwrap();
        let back: TreeModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tree);
        for (a, b) in back.nodes().iter().zip(tree.nodes()) {
            assert_eq!(a.node_mean.to_bits(), b.node_mean.to_bits());
        }
    }

    #[test]
    fn malformed_documents_rejected() {
        let tree = four_point_tree();
        let mut doc = TreeDocument::from(tree.clone());
        doc.nodes[1].n_samples = 5;
        assert!(TreeModel::try_from(doc).is_err());

        let mut doc = TreeDocument::from(tree.clone());
        doc.nodes[0].left = None;
        assert!(TreeModel::try_from(doc).is_err());

        let mut doc = TreeDocument::from(tree);
        doc.format = "other".into();
        assert!(TreeModel::try_from(doc).is_err());
    }
}
