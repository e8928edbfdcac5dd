//! Bagged random forest; the prediction is the mode of the tree votes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FeatureLayout};
use super::majority;
use super::tree::{train_tree_on, DecisionTree, TreeParams};
use crate::domain::{HealthLabel, ParameterKind};
use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeParams,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub config: ForestConfig,
    pub seed: u64,
    pub layout: FeatureLayout,
    pub target: ParameterKind,
}

impl ForestModel {
    /// One vote per tree, in tree order.
    pub fn votes(&self, x: &[f64]) -> Vec<HealthLabel> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Most frequent vote; ties go to the lowest-severity label.
    pub fn predict(&self, x: &[f64]) -> HealthLabel {
        let mut tally = [0usize; 3];
        for t in &self.trees {
            tally[t.predict(x).index()] += 1;
        }
        majority(&tally)
    }
}

/// Trains `n_trees` trees, each on a bootstrap resample of `data` drawn with
/// its own RNG stream derived from `seed`. Trees train in parallel; the
/// result does not depend on scheduling.
pub fn train_forest(data: &Dataset, config: &ForestConfig, seed: u64) -> Result<ForestModel> {
    if config.n_trees == 0 {
        return Err(Error::config("models.forest.n_trees", "must be at least 1"));
    }
    config.tree.validate()?;
    let n = data.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(child_seed(seed, t as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            train_tree_on(data, rows, config.tree, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        config: *config,
        seed,
        layout: data.layout(),
        target: data.target_parameter(),
    })
}
