//! The three classifiers and their JSON persistence.
//!
//! Every model predicts a [`HealthLabel`] for one target parameter from a
//! feature vector laid out by its [`FeatureLayout`]. Ties between classes
//! always resolve to the lowest-severity label.

pub mod dataset;
pub mod forest;
pub mod gbt;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use dataset::{Dataset, FeatureLayout};
pub use forest::{train_forest, ForestConfig, ForestModel};
pub use gbt::{softmax_grad_hess, train_gbt, BoostConfig, BoostedModel};
pub use svm::{train_svm, SvmConfig, SvmModel};
pub use tree::{train_tree, DecisionTree, TreeNode, TreeParams};

use crate::domain::{HealthLabel, ParameterKind, PerParameter};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u64 = 1;

/// Label with the largest count; ties go to the lowest severity.
pub(crate) fn majority(counts: &[usize; 3]) -> HealthLabel {
    let mut best = 0;
    for c in 1..3 {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    HealthLabel::ALL[best]
}

/// Label with the largest score; ties go to the lowest severity.
pub(crate) fn argmax_low(scores: &[f64; 3]) -> HealthLabel {
    let mut best = 0;
    for c in 1..3 {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    HealthLabel::ALL[best]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Gbt,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Forest, ModelKind::Gbt, ModelKind::Svm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Gbt => "gbt",
            ModelKind::Svm => "svm",
        }
    }

    /// Name used in report tables.
    pub fn approach(self) -> &'static str {
        match self {
            ModelKind::Forest => "Random Forest",
            ModelKind::Gbt => "Gradient Boosting",
            ModelKind::Svm => "Linear SVM",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::ModelFormat(format!("unknown model kind `{s}`")))
    }
}

/// Hyperparameters for all three trainers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub forest: ForestConfig,
    pub gbt: BoostConfig,
    pub svm: SvmConfig,
    pub univariate: bool,
}

impl ModelConfig {
    pub fn layout_for(&self, target: ParameterKind) -> FeatureLayout {
        if self.univariate {
            FeatureLayout::Univariate(target)
        } else {
            FeatureLayout::Multivariate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Forest(ForestModel),
    Gbt(BoostedModel),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn train(kind: ModelKind, data: &Dataset, config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::Forest => TrainedModel::Forest(train_forest(data, &config.forest, seed)?),
            ModelKind::Gbt => TrainedModel::Gbt(train_gbt(data, &config.gbt)?),
            ModelKind::Svm => TrainedModel::Svm(train_svm(data, &config.svm, seed)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Gbt(_) => ModelKind::Gbt,
            TrainedModel::Svm(_) => ModelKind::Svm,
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        match self {
            TrainedModel::Forest(m) => m.layout,
            TrainedModel::Gbt(m) => m.layout,
            TrainedModel::Svm(m) => m.layout,
        }
    }

    pub fn target(&self) -> ParameterKind {
        match self {
            TrainedModel::Forest(m) => m.target,
            TrainedModel::Gbt(m) => m.target,
            TrainedModel::Svm(m) => m.target,
        }
    }

    /// Feature width the model's internals were built for.
    pub fn input_width(&self) -> usize {
        match self {
            TrainedModel::Forest(m) => m.trees.first().map_or(0, |t| t.n_features),
            TrainedModel::Gbt(_) => self.layout().width(),
            TrainedModel::Svm(m) => m.standardizer.mean.len(),
        }
    }

    /// Checks that the stored structure agrees with the declared layout.
    pub fn check_consistent(&self) -> Result<()> {
        let width = self.layout().width();
        if self.input_width() != width {
            return Err(Error::Contract(format!(
                "{} model for {} expects {} features, layout provides {width}",
                self.kind(),
                self.target(),
                self.input_width()
            )));
        }
        let max_feature = match self {
            TrainedModel::Forest(m) => m
                .trees
                .iter()
                .flat_map(|t| &t.nodes)
                .filter_map(|n| match n {
                    TreeNode::Split { feature, .. } => Some(*feature),
                    TreeNode::Leaf { .. } => None,
                })
                .max(),
            TrainedModel::Gbt(m) => m
                .rounds
                .iter()
                .flatten()
                .flat_map(|t| &t.nodes)
                .filter_map(|n| match n {
                    gbt::RegNode::Split { feature, .. } => Some(*feature),
                    gbt::RegNode::Leaf { .. } => None,
                })
                .max(),
            TrainedModel::Svm(m) => {
                if m.weights.iter().any(|w| w.len() != width)
                    || m.standardizer.stddev.len() != width
                {
                    return Err(Error::Contract(format!(
                        "svm model for {} has weight vectors of the wrong width",
                        m.target
                    )));
                }
                None
            }
        };
        if let Some(f) = max_feature.filter(|&f| f >= width) {
            return Err(Error::Contract(format!(
                "{} model for {} splits on feature {f} but layout has {width}",
                self.kind(),
                self.target()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> HealthLabel {
        match self {
            TrainedModel::Forest(m) => m.predict(x),
            TrainedModel::Gbt(m) => m.predict(x),
            TrainedModel::Svm(m) => m.predict(x),
        }
    }

    pub fn predict_reading(&self, values: &PerParameter<f64>) -> HealthLabel {
        self.predict(&self.layout().extract(values))
    }

    /// Versioned JSON document: `{"kind": ..., "version": 1, "model": {...}}`.
    pub fn to_json(&self) -> Result<String> {
        let model = match self {
            TrainedModel::Forest(m) => serde_json::to_value(m),
            TrainedModel::Gbt(m) => serde_json::to_value(m),
            TrainedModel::Svm(m) => serde_json::to_value(m),
        }
        .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let mut doc = Map::new();
        doc.insert("kind".into(), Value::from(self.kind().name()));
        doc.insert("version".into(), Value::from(MODEL_FORMAT_VERSION));
        doc.insert("model".into(), model);
        serde_json::to_string(&Value::Object(doc)).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::ModelFormat(e.to_string());
        let mut doc: Map<String, Value> = serde_json::from_str(text).map_err(bad)?;
        let version = doc.get("version").and_then(Value::as_u64);
        if version != Some(MODEL_FORMAT_VERSION) {
            return Err(Error::ModelFormat(format!(
                "expected version {MODEL_FORMAT_VERSION}, found {}",
                doc.get("version")
                    .map_or("none".to_owned(), |v| v.to_string())
            )));
        }
        let kind: ModelKind = doc
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::ModelFormat("missing `kind`".into()))?
            .parse()?;
        let model = doc
            .remove("model")
            .ok_or_else(|| Error::ModelFormat("missing `model`".into()))?;
        let loaded = match kind {
            ModelKind::Forest => TrainedModel::Forest(serde_json::from_value(model).map_err(bad)?),
            ModelKind::Gbt => TrainedModel::Gbt(serde_json::from_value(model).map_err(bad)?),
            ModelKind::Svm => TrainedModel::Svm(serde_json::from_value(model).map_err(bad)?),
        };
        loaded.check_consistent()?;
        Ok(loaded)
    }
}
