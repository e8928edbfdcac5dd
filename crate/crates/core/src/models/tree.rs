//! CART classification trees grown greedily on Gini impurity.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::majority;
use crate::domain::HealthLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_samples: usize,
    /// Features considered at each split, drawn without replacement.
    pub features_per_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_leaf_samples: 2,
            features_per_split: 3,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf_samples == 0 {
            return Err(Error::config(
                "models.forest.tree.min_leaf_samples",
                "must be at least 1",
            ));
        }
        if self.features_per_split == 0 {
            return Err(Error::config(
                "models.forest.tree.features_per_split",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class_counts: [usize; 3],
    },
}

/// Nodes stored in an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

impl DecisionTree {
    fn leaf_of(&self, x: &[f64]) -> &[usize; 3] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                TreeNode::Leaf { class_counts } => return class_counts,
            }
        }
    }

    /// Majority class of the leaf reached by `x`; ties go to the lower severity.
    pub fn predict(&self, x: &[f64]) -> HealthLabel {
        majority(self.leaf_of(x))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[usize; 3]> {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { class_counts } => Some(class_counts),
            TreeNode::Split { .. } => None,
        })
    }
}

fn gini_weighted(counts: &[usize; 3], n: usize) -> f64 {
    // n · Gini(counts) = n − Σ c² / n
    if n == 0 {
        return 0.0;
    }
    let n_f = n as f64;
    n_f - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n_f
}

fn counts_of(data: &Dataset, rows: &[usize]) -> [usize; 3] {
    let mut c = [0; 3];
    for &r in rows {
        c[data.target(r).index()] += 1;
    }
    c
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

/// Best Gini split of `rows` on `feature`, respecting the minimum leaf size.
fn best_split_on(
    data: &Dataset,
    rows: &[usize],
    feature: usize,
    parent_impurity: f64,
    min_leaf: usize,
    scratch: &mut Vec<(f64, HealthLabel)>,
) -> Option<SplitChoice> {
    scratch.clear();
    scratch.extend(
        rows.iter()
            .map(|&r| (data.feature(r, feature), data.target(r))),
    );
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scratch.len();
    let total = {
        let mut c = [0; 3];
        for (_, t) in scratch.iter() {
            c[t.index()] += 1;
        }
        c
    };
    let mut left = [0usize; 3];
    let mut best: Option<SplitChoice> = None;
    for k in 0..n - 1 {
        left[scratch[k].1.index()] += 1;
        let n_left = k + 1;
        let (a, b) = (scratch[k].0, scratch[k + 1].0);
        if a == b || n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
        let child = gini_weighted(&left, n_left) + gini_weighted(&right, n - n_left);
        let decrease = parent_impurity - child;
        if best.as_ref().is_none_or(|s| decrease > s.decrease) {
            let mid = a + (b - a) / 2.0;
            let threshold = if mid < b { mid } else { a };
            best = Some(SplitChoice {
                feature,
                threshold,
                decrease,
            });
        }
    }
    best
}

struct Grower<'a, R> {
    data: &'a Dataset,
    params: TreeParams,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, HealthLabel)>,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let counts = counts_of(self.data, &rows);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class_counts: counts,
        });
        let n = rows.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_leaf_samples {
            return id;
        }

        let n_features = self.data.n_features();
        let k = self.params.features_per_split.min(n_features);
        let candidates = sample(self.rng, n_features, k);
        let parent = gini_weighted(&counts, n);
        let mut best: Option<SplitChoice> = None;
        for f in candidates.iter() {
            if let Some(s) = best_split_on(
                self.data,
                &rows,
                f,
                parent,
                self.params.min_leaf_samples,
                &mut self.scratch,
            ) {
                if best.as_ref().is_none_or(|b| s.decrease > b.decrease) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best.filter(|s| s.decrease > 1e-12) else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.data.feature(r, split.feature) <= split.threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

/// Grows a tree on the given rows of `data` (duplicates allowed, as in a
/// bootstrap resample).
pub(crate) fn train_tree_on<R: Rng>(
    data: &Dataset,
    rows: Vec<usize>,
    params: TreeParams,
    rng: &mut R,
) -> DecisionTree {
    let mut grower = Grower {
        data,
        params,
        rng,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    grower.grow(rows, 0);
    DecisionTree {
        nodes: grower.nodes,
        n_features: data.n_features(),
    }
}

/// Grows a tree on every row of `data`. Each split maximises the Gini
/// decrease over `features_per_split` randomly chosen features.
pub fn train_tree<R: Rng>(data: &Dataset, params: TreeParams, rng: &mut R) -> Result<DecisionTree> {
    params.validate()?;
    if data.len() < params.min_leaf_samples {
        return Err(Error::DegenerateData(format!(
            "{} rows is fewer than min_leaf_samples {}",
            data.len(),
            params.min_leaf_samples
        )));
    }
    Ok(train_tree_on(data, (0..data.len()).collect(), params, rng))
}
