//! Gradient-boosted regression trees for three-class softmax log loss.
//!
//! Each round fits one regression tree per class to the per-sample gradient
//! `g` and diagonal hessian `h` of the log loss at the current scores. For a
//! leaf with sums `G`, `H` the optimal weight is `-G / (H + λ)`; a split is
//! kept only if
//!
//! ```text
//! ½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ > 0
//! ```
//!
//! Stored leaf values already include the learning rate η, so a tree's
//! contribution to the class score is just its leaf value. The regularised
//! objective tracked per round is the total log loss plus, for every tree so
//! far, `γ·leaves + ½·λ·Σ value²` over the stored leaf values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::argmax_low;
use super::dataset::{Dataset, FeatureLayout};
use crate::domain::{HealthLabel, ParameterKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub max_depth: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 100,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: 4,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(
                "models.gbt.learning_rate",
                "must lie in (0, 1]",
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(
                "models.gbt.lambda",
                "must be finite and >= 0",
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("models.gbt.gamma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Softmax probabilities, computed with the max subtracted for stability.
pub fn softmax(scores: &[f64; 3]) -> [f64; 3] {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scores.map(|s| (s - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

/// `log Σ exp(s) − s[y]`.
pub fn log_loss(scores: &[f64; 3], truth: HealthLabel) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    lse - scores[truth.index()]
}

/// Gradient `p − onehot(y)` and diagonal hessian `p·(1 − p)` of the log loss.
pub fn softmax_grad_hess(scores: &[f64; 3], truth: HealthLabel) -> ([f64; 3], [f64; 3]) {
    let p = softmax(scores);
    let mut g = p;
    g[truth.index()] -= 1.0;
    (g, p.map(|q| q * (1.0 - q)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Split {
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
                RegNode::Leaf { value } => return *value,
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            RegNode::Leaf { value } => Some(*value),
            RegNode::Split { .. } => None,
        })
    }

    /// `γ·leaves + ½·λ·Σ value²`.
    pub fn penalty(&self, lambda: f64, gamma: f64) -> f64 {
        let (count, sq) = self
            .leaf_values()
            .fold((0usize, 0.0), |(c, s), v| (c + 1, s + v * v));
        gamma * count as f64 + 0.5 * lambda * sq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    /// Initial class scores: smoothed log class priors of the training data.
    pub base_score: [f64; 3],
    /// One tree per class per round.
    pub rounds: Vec<[RegressionTree; 3]>,
    pub config: BoostConfig,
    /// Regularised objective before the first round and after each round.
    pub objective_history: Vec<f64>,
    pub layout: FeatureLayout,
    pub target: ParameterKind,
}

impl BoostedModel {
    pub fn class_scores(&self, x: &[f64]) -> [f64; 3] {
        let mut s = self.base_score;
        for trees in &self.rounds {
            for (c, t) in trees.iter().enumerate() {
                s[c] += t.predict(x);
            }
        }
        s
    }

    /// Argmax of the class scores (equivalently of their softmax); ties go
    /// to the lowest severity.
    pub fn predict(&self, x: &[f64]) -> HealthLabel {
        argmax_low(&self.class_scores(x))
    }

    pub fn penalty(&self) -> f64 {
        self.rounds
            .iter()
            .flatten()
            .map(|t| t.penalty(self.config.lambda, self.config.gamma))
            .sum()
    }
}

fn leaf_term(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

/// Row indices sorted by each feature, shared by every tree of a fit.
struct Presorted {
    by_feature: Vec<Vec<usize>>,
}

impl Presorted {
    fn new(data: &Dataset) -> Self {
        let by_feature = (0..data.n_features())
            .map(|f| {
                let mut idx: Vec<usize> = (0..data.len()).collect();
                idx.sort_by(|&a, &b| data.feature(a, f).total_cmp(&data.feature(b, f)));
                idx
            })
            .collect();
        Presorted { by_feature }
    }
}

struct RegGrower<'a> {
    data: &'a Dataset,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a BoostConfig,
    nodes: Vec<RegNode>,
    /// Scratch: which side each row went to during a partition.
    goes_left: Vec<bool>,
}

impl RegGrower<'_> {
    /// `sorted[f]` lists this node's rows ordered by feature `f`.
    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let lambda = self.config.lambda;
        let id = self.nodes.len();
        self.nodes.push(RegNode::Leaf {
            value: self.config.learning_rate * leaf_weight(g, h, lambda),
        });
        if depth >= self.config.max_depth || rows.len() < 2 {
            return id;
        }

        let parent = leaf_term(g, h, lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let r = order[k];
                gl += self.grad[r];
                hl += self.hess[r];
                let (a, b) = (self.data.feature(r, f), self.data.feature(order[k + 1], f));
                if a == b {
                    continue;
                }
                let gain = 0.5
                    * (leaf_term(gl, hl, lambda) + leaf_term(g - gl, h - hl, lambda) - parent)
                    - self.config.gamma;
                if best.is_none_or(|(bg, _, _)| gain > bg) {
                    let mid = a + (b - a) / 2.0;
                    best = Some((gain, f, if mid < b { mid } else { a }));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        if gain <= 0.0 {
            return id;
        }

        for &r in &sorted[0] {
            self.goes_left[r] = self.data.feature(r, feature) <= threshold;
        }
        let (left_sorted, right_sorted): (Vec<_>, Vec<_>) = sorted
            .into_iter()
            .map(|order| order.into_iter().partition(|&r| self.goes_left[r]))
            .unzip();
        let left = self.grow(left_sorted, depth + 1);
        let right = self.grow(right_sorted, depth + 1);
        self.nodes[id] = RegNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn fit_regression_tree(
    data: &Dataset,
    presorted: &Presorted,
    grad: &[f64],
    hess: &[f64],
    config: &BoostConfig,
) -> RegressionTree {
    let mut grower = RegGrower {
        data,
        grad,
        hess,
        config,
        nodes: Vec::new(),
        goes_left: vec![false; data.len()],
    };
    grower.grow(presorted.by_feature.clone(), 0);
    RegressionTree {
        nodes: grower.nodes,
    }
}

/// Smoothed log priors `ln((n_c + 1) / (N + 3))`; the argmax is the majority
/// class with ties to the lowest severity.
fn prior_scores(data: &Dataset) -> [f64; 3] {
    let counts = data.class_counts();
    let n = data.len() as f64;
    counts.map(|c| ((c as f64 + 1.0) / (n + 3.0)).ln())
}

fn total_loss(data: &Dataset, scores: &[[f64; 3]]) -> f64 {
    scores
        .iter()
        .zip(data.targets())
        .map(|(s, &y)| log_loss(s, y))
        .sum()
}

pub fn train_gbt(data: &Dataset, config: &BoostConfig) -> Result<BoostedModel> {
    config.validate()?;
    let n = data.len();
    let base_score = prior_scores(data);
    let mut scores = vec![base_score; n];
    let presorted = Presorted::new(data);
    let mut rounds: Vec<[RegressionTree; 3]> = Vec::with_capacity(config.rounds);
    let mut penalty = 0.0;
    let mut objective_history = vec![total_loss(data, &scores)];

    let mut grad = vec![[0.0; 3]; n];
    let mut hess = vec![[0.0; 3]; n];
    for _ in 0..config.rounds {
        for i in 0..n {
            (grad[i], hess[i]) = softmax_grad_hess(&scores[i], data.target(i));
        }
        let trees: Vec<RegressionTree> = (0..3)
            .into_par_iter()
            .map(|c| {
                let g: Vec<f64> = grad.iter().map(|v| v[c]).collect();
                let h: Vec<f64> = hess.iter().map(|v| v[c]).collect();
                fit_regression_tree(data, &presorted, &g, &h, config)
            })
            .collect();
        let trees: [RegressionTree; 3] = trees.try_into().expect("three class trees");
        for (i, s) in scores.iter_mut().enumerate() {
            let x = data.row(i);
            for (c, t) in trees.iter().enumerate() {
                s[c] += t.predict(x);
            }
        }
        penalty += trees
            .iter()
            .map(|t| t.penalty(config.lambda, config.gamma))
            .sum::<f64>();
        objective_history.push(total_loss(data, &scores) + penalty);
        rounds.push(trees);
    }

    Ok(BoostedModel {
        base_score,
        rounds,
        config: *config,
        objective_history,
        layout: data.layout(),
        target: data.target_parameter(),
    })
}
