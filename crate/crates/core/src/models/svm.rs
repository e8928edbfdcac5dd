//! Linear one-vs-rest SVM trained by stochastic subgradient descent.
//!
//! For each class `c` the trainer minimises
//!
//! ```text
//! J_c(w, b) = ½·(‖w‖² + b²) + C · Σ_i max(0, 1 − y_i·(w·x̃_i + b))
//! ```
//!
//! over standardised inputs `x̃`, with `y_i = +1` for rows of class `c` and
//! `−1` otherwise. Updates follow the Pegasos schedule: with
//! `λ = 1 / (C·N)` the t-th update uses step `1 / (λ·t)`, visiting rows in a
//! seeded shuffled order each epoch. No class weighting is applied.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::argmax_low;
use super::dataset::{Dataset, FeatureLayout};
use crate::domain::{HealthLabel, ParameterKind};
use crate::error::{Error, Result};
use crate::rng::{child_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 200,
        }
    }
}

/// Per-feature mean and standard deviation frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len() as f64;
        let d = data.n_features();
        let mut mean = vec![0.0; d];
        for row in data.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in data.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // Constant features map to zero rather than dividing by zero.
        let stddev = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, stddev }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.stddev)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// One weight vector per class, in severity order.
    pub weights: [Vec<f64>; 3],
    pub biases: [f64; 3],
    pub standardizer: Standardizer,
    pub config: SvmConfig,
    pub seed: u64,
    /// Per class, the objective at the start and after each epoch.
    pub objective_history: [Vec<f64>; 3],
    pub layout: FeatureLayout,
    pub target: ParameterKind,
}

impl SvmModel {
    pub fn decision_values(&self, x: &[f64]) -> [f64; 3] {
        let z = self.standardizer.transform(x);
        std::array::from_fn(|c| dot(&self.weights[c], &z) + self.biases[c])
    }

    /// Argmax of the per-class decision values; ties go to the lowest severity.
    pub fn predict(&self, x: &[f64]) -> HealthLabel {
        argmax_low(&self.decision_values(x))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `½·(‖w‖² + b²) + C·Σ hinge` on already standardised rows.
pub fn ovr_objective(w: &[f64], b: f64, c: f64, rows: &[Vec<f64>], signs: &[f64]) -> f64 {
    let reg = 0.5 * (dot(w, w) + b * b);
    let hinge: f64 = rows
        .iter()
        .zip(signs)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    reg + c * hinge
}

fn train_binary(
    rows: &[Vec<f64>],
    signs: &[f64],
    config: &SvmConfig,
    seed: u64,
) -> (Vec<f64>, f64, Vec<f64>) {
    let n = rows.len();
    let d = rows[0].len();
    let lambda = 1.0 / (config.c * n as f64);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut history = Vec::with_capacity(config.epochs + 1);
    history.push(ovr_objective(&w, b, config.c, rows, signs));

    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let step = 1.0 / (lambda * t as f64);
            let shrink = 1.0 - 1.0 / t as f64;
            let margin = signs[i] * (dot(&w, &rows[i]) + b);
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if margin < 1.0 {
                let s = step * signs[i];
                for (v, x) in w.iter_mut().zip(&rows[i]) {
                    *v += s * x;
                }
                b += s;
            }
        }
        history.push(ovr_objective(&w, b, config.c, rows, signs));
    }
    (w, b, history)
}

pub fn train_svm(data: &Dataset, config: &SvmConfig, seed: u64) -> Result<SvmModel> {
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(Error::config("models.svm.c", "must be finite and > 0"));
    }
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::DegenerateData(format!(
            "SVM needs at least two classes, {} target has {present}",
            data.target_parameter()
        )));
    }
    let standardizer = Standardizer::fit(data);
    let rows: Vec<Vec<f64>> = data.rows().map(|r| standardizer.transform(r)).collect();

    let mut weights: [Vec<f64>; 3] = Default::default();
    let mut biases = [0.0; 3];
    let mut objective_history: [Vec<f64>; 3] = Default::default();
    for label in HealthLabel::ALL {
        let c = label.index();
        let signs: Vec<f64> = data
            .targets()
            .iter()
            .map(|&t| if t == label { 1.0 } else { -1.0 })
            .collect();
        let (w, b, hist) = train_binary(&rows, &signs, config, child_seed(seed, c as u64));
        weights[c] = w;
        biases[c] = b;
        objective_history[c] = hist;
    }
    Ok(SvmModel {
        weights,
        biases,
        standardizer,
        config: *config,
        seed,
        objective_history,
        layout: data.layout(),
        target: data.target_parameter(),
    })
}
