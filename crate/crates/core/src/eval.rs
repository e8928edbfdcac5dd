//! Stratified splitting, confusion matrices and metric tables.
//!
//! Any 0/0 ratio evaluates to 0, so a class the model never predicts shows up
//! as a zero row rather than NaN.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::{HealthLabel, ParameterKind};
use crate::error::{Error, Result};
use crate::models::{Dataset, ModelKind};
use crate::rng::{child_seed, rng_from_seed};

pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

/// Row indices of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn apply(&self, data: &Dataset) -> (Dataset, Dataset) {
        (data.subset(&self.train), data.subset(&self.test))
    }
}

/// Per class, shuffles that class's rows and sends
/// `round_half_even(support · test_fraction)` of them to the test side.
pub fn stratified_split_indices(
    targets: &[HealthLabel],
    test_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if targets.len() < 4 {
        return Err(Error::Contract(format!(
            "need at least 4 rows to split, got {}",
            targets.len()
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("split.test_fraction", "must lie in (0, 1)"));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in HealthLabel::ALL {
        let mut rows: Vec<usize> = (0..targets.len())
            .filter(|&i| targets[i] == label)
            .collect();
        let k = (rows.len() as f64 * test_fraction).round_ties_even() as usize;
        rows.shuffle(&mut rng_from_seed(child_seed(seed, label.index() as u64)));
        test.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn stratified_split(
    data: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let split = stratified_split_indices(data.targets(), test_fraction, seed)?;
    Ok(split.apply(data))
}

/// Rows are true labels, columns predicted, both in severity order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// True-class support.
    pub fn row_sum(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    /// Number of predictions of `class`.
    pub fn col_sum(&self, class: usize) -> usize {
        (0..3).map(|i| self.counts[i][class]).sum()
    }
}

pub fn confusion(y_true: &[HealthLabel], y_pred: &[HealthLabel]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Contract(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Contract("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: [ClassMetrics; 3],
    pub accuracy: f64,
    /// Unweighted mean over classes that occur in the truth or the predictions.
    pub macro_avg: Averages,
    /// Support-weighted mean over all classes.
    pub weighted_avg: Averages,
}

impl MetricReport {
    pub fn class(&self, label: HealthLabel) -> &ClassMetrics {
        &self.per_class[label.index()]
    }

    /// Lowest recall among EarlyWarning/CriticalAlert classes with test support.
    pub fn min_minority_recall(&self) -> Option<f64> {
        [HealthLabel::EarlyWarning, HealthLabel::CriticalAlert]
            .into_iter()
            .map(|l| self.class(l))
            .filter(|m| m.support > 0)
            .map(|m| m.recall)
            .min_by(f64::total_cmp)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricReport {
    let per_class: [ClassMetrics; 3] = std::array::from_fn(|c| {
        let tp = cm.counts[c][c];
        let precision = ratio(tp, cm.col_sum(c));
        let recall = ratio(tp, cm.row_sum(c));
        ClassMetrics {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: cm.row_sum(c),
        }
    });
    let present: Vec<&ClassMetrics> = (0..3)
        .filter(|&c| cm.row_sum(c) + cm.col_sum(c) > 0)
        .map(|c| &per_class[c])
        .collect();
    let k = present.len().max(1) as f64;
    let macro_avg = Averages {
        precision: present.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: present.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: present.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let total = cm.total();
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class
                .iter()
                .map(|m| f(m) * m.support as f64)
                .sum::<f64>()
                / total as f64
        }
    };
    MetricReport {
        per_class,
        accuracy: ratio(cm.trace(), total),
        macro_avg,
        weighted_avg: Averages {
            precision: weighted(|m| m.precision),
            recall: weighted(|m| m.recall),
            f1: weighted(|m| m.f1),
        },
    }
}

/// One (model, dataset variant, parameter) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub approach: ModelKind,
    pub dataset: String,
    pub parameter: ParameterKind,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricReport,
    pub remarks: String,
}

impl ReportEntry {
    pub fn new(
        approach: ModelKind,
        dataset: impl Into<String>,
        parameter: ParameterKind,
        confusion: ConfusionMatrix,
    ) -> Self {
        let metrics = metrics(&confusion);
        ReportEntry {
            approach,
            dataset: dataset.into(),
            parameter,
            confusion,
            remarks: remark_for(&metrics),
            metrics,
        }
    }
}

fn remark_for(m: &MetricReport) -> String {
    let weak: Vec<String> = [HealthLabel::EarlyWarning, HealthLabel::CriticalAlert]
        .into_iter()
        .filter(|&l| m.class(l).support > 0 && m.class(l).recall < 0.5)
        .map(|l| format!("{} recall {:.2}", l.name(), m.class(l).recall))
        .collect();
    weak.join("; ")
}

/// Flat CSV row of a report entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub dataset: String,
    pub parameter: ParameterKind,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub normal_precision: f64,
    pub normal_recall: f64,
    pub normal_f1: f64,
    pub early_warning_precision: f64,
    pub early_warning_recall: f64,
    pub early_warning_f1: f64,
    pub critical_alert_precision: f64,
    pub critical_alert_recall: f64,
    pub critical_alert_f1: f64,
    pub remarks: String,
}

impl From<&ReportEntry> for ReportRow {
    fn from(e: &ReportEntry) -> Self {
        let m = &e.metrics;
        let [n, w, c] = m.per_class;
        ReportRow {
            approach: e.approach.name().to_owned(),
            dataset: e.dataset.clone(),
            parameter: e.parameter,
            accuracy: m.accuracy,
            precision_macro: m.macro_avg.precision,
            recall_macro: m.macro_avg.recall,
            f1_macro: m.macro_avg.f1,
            normal_precision: n.precision,
            normal_recall: n.recall,
            normal_f1: n.f1,
            early_warning_precision: w.precision,
            early_warning_recall: w.recall,
            early_warning_f1: w.f1,
            critical_alert_precision: c.precision,
            critical_alert_recall: c.recall,
            critical_alert_f1: c.f1,
            remarks: e.remarks.clone(),
        }
    }
}

/// Range of one metric across parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        values.fold(
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| Range {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    fn show(&self, scale: f64, decimals: usize) -> String {
        let (a, b) = (self.min * scale, self.max * scale);
        if format!("{a:.decimals$}") == format!("{b:.decimals$}") {
            format!("{a:.decimals$}")
        } else {
            format!("{a:.decimals$}-{b:.decimals$}")
        }
    }
}

/// One line of the consolidated summary, keyed by approach and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub approach: ModelKind,
    pub dataset: String,
    pub accuracy: Range,
    pub precision: Range,
    pub recall: Range,
    pub f1: Range,
    pub remarks: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub entries: Vec<ReportEntry>,
}

impl EvaluationReport {
    pub fn get(&self, approach: ModelKind, parameter: ParameterKind) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.approach == approach && e.parameter == parameter)
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.entries.iter().map(ReportRow::from).collect()
    }

    pub fn summary(&self) -> Vec<SummaryLine> {
        let mut groups: BTreeMap<(ModelKind, &str), Vec<&ReportEntry>> = BTreeMap::new();
        for e in &self.entries {
            groups.entry((e.approach, &e.dataset)).or_default().push(e);
        }
        groups
            .into_iter()
            .map(|((approach, dataset), es)| {
                let weak: Vec<String> = es
                    .iter()
                    .filter(|e| !e.remarks.is_empty())
                    .map(|e| format!("{}: {}", e.parameter, e.remarks))
                    .collect();
                SummaryLine {
                    approach,
                    dataset: dataset.to_owned(),
                    accuracy: Range::of(es.iter().map(|e| e.metrics.accuracy)),
                    precision: Range::of(es.iter().map(|e| e.metrics.macro_avg.precision)),
                    recall: Range::of(es.iter().map(|e| e.metrics.macro_avg.recall)),
                    f1: Range::of(es.iter().map(|e| e.metrics.macro_avg.f1)),
                    remarks: if weak.is_empty() {
                        "all minority classes recalled at >= 0.50".to_owned()
                    } else {
                        weak.join(" | ")
                    },
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Vec<ReportRow>> {
        let mut r = csv::Reader::from_reader(source);
        r.deserialize()
            .map(|row| row.map_err(Error::from))
            .collect()
    }

    pub fn write_summary_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "approach",
            "dataset",
            "accuracy_pct",
            "precision",
            "recall",
            "f1",
            "remarks",
        ])?;
        for s in self.summary() {
            w.write_record([
                s.approach.approach().to_owned(),
                s.dataset.clone(),
                s.accuracy.show(100.0, 1),
                s.precision.show(1.0, 2),
                s.recall.show(1.0, 2),
                s.f1.show(1.0, 2),
                s.remarks.clone(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Plain-text rendering of the consolidated summary.
    pub fn summary_text(&self) -> String {
        let mut out = format!(
            "{:<18} {:<16} {:>12} {:>10} {:>10} {:>10}  {}\n",
            "Approach", "Dataset", "Accuracy(%)", "Precision", "Recall", "F1", "Remarks"
        );
        for s in self.summary() {
            out.push_str(&format!(
                "{:<18} {:<16} {:>12} {:>10} {:>10} {:>10}  {}\n",
                s.approach.approach(),
                s.dataset,
                s.accuracy.show(100.0, 1),
                s.precision.show(1.0, 2),
                s.recall.show(1.0, 2),
                s.f1.show(1.0, 2),
                s.remarks
            ));
        }
        out
    }

    /// Confusion matrices of one model, five parameters stacked:
    /// `parameter,true_label,pred_Normal,pred_EarlyWarning,pred_CriticalAlert`.
    pub fn write_confusion_csv<W: Write>(&self, approach: ModelKind, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "parameter",
            "true_label",
            "pred_Normal",
            "pred_EarlyWarning",
            "pred_CriticalAlert",
        ])?;
        for e in self.entries.iter().filter(|e| e.approach == approach) {
            for t in HealthLabel::ALL {
                let row = e.confusion.counts[t.index()];
                w.write_record([
                    e.parameter.name().to_owned(),
                    t.name().to_owned(),
                    row[0].to_string(),
                    row[1].to_string(),
                    row[2].to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
