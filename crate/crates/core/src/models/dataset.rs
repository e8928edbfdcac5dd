use serde::{Deserialize, Serialize};

use crate::domain::{HealthLabel, ParameterKind, PerParameter};
use crate::error::{Error, Result};
use crate::thresholds::LabeledSeries;

/// Which sensor values a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "parameter")]
pub enum FeatureLayout {
    /// All five readings in canonical order.
    Multivariate,
    /// Only the named parameter's reading.
    Univariate(ParameterKind),
}

impl FeatureLayout {
    pub fn width(self) -> usize {
        match self {
            FeatureLayout::Multivariate => ParameterKind::COUNT,
            FeatureLayout::Univariate(_) => 1,
        }
    }

    pub fn extract(self, values: &PerParameter<f64>) -> Vec<f64> {
        match self {
            FeatureLayout::Multivariate => values.to_array().to_vec(),
            FeatureLayout::Univariate(p) => vec![values[p]],
        }
    }
}

/// Row-major feature matrix with one health label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    targets: Vec<HealthLabel>,
    target_parameter: ParameterKind,
    layout: FeatureLayout,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        targets: Vec<HealthLabel>,
        target_parameter: ParameterKind,
        layout: FeatureLayout,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::DegenerateData("dataset has no rows".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::Contract(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let width = layout.width();
        let mut features = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::Contract(format!(
                    "row {i} has {} features, layout expects {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a non-finite feature")));
            }
            features.extend(row);
        }
        Ok(Dataset {
            features,
            n_features: width,
            targets,
            target_parameter,
            layout,
        })
    }

    /// One row per reading, labeled with `target`'s health label.
    pub fn from_labeled(
        labeled: &LabeledSeries,
        target: ParameterKind,
        layout: FeatureLayout,
    ) -> Result<Self> {
        let rows = labeled
            .base
            .readings()
            .iter()
            .map(|r| layout.extract(&r.values))
            .collect();
        let targets = labeled.labels_for(target).collect();
        Dataset::new(rows, targets, target, layout)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn feature(&self, i: usize, f: usize) -> f64 {
        self.features[i * self.n_features + f]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn targets(&self) -> &[HealthLabel] {
        &self.targets
    }

    pub fn target(&self, i: usize) -> HealthLabel {
        self.targets[i]
    }

    pub fn target_parameter(&self) -> ParameterKind {
        self.target_parameter
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for t in &self.targets {
            c[t.index()] += 1;
        }
        c
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            target_parameter: self.target_parameter,
            layout: self.layout,
        }
    }
}
