//! Adaptive percentile thresholds and dual-threshold labeling.
//!
//! Each reading of each parameter is labeled independently:
//!
//! ```text
//! CriticalAlert   x > fixed
//! EarlyWarning    fixed >= x > adaptive
//! Normal          x <= adaptive
//! ```
//!
//! The adaptive limit is the 95th percentile of the parameter's history,
//! clamped so it never exceeds the fixed limit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{
    HealthLabel, ParameterKind, PerParameter, Provenance, SensorReading, SensorSeries,
    ThresholdPair,
};
use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, parse_timestamp};

pub const ADAPTIVE_PERCENTILE: f64 = 0.95;

/// Fixed engineering limits: 5.0 mm/s, 80.0 °C, 2800.0 m³/h, 6.0 bar, 240.0 A.
pub const DEFAULT_FIXED: PerParameter<f64> = PerParameter {
    vibration: 5.0,
    temperature: 80.0,
    flow: 2800.0,
    pressure: 6.0,
    current: 240.0,
};

/// The `p`-quantile with linear interpolation between adjacent order
/// statistics: for sorted `v[0..n]` and `h = (n-1)·p`, returns
/// `v[⌊h⌋] + (h-⌊h⌋)·(v[⌊h⌋+1] - v[⌊h⌋])`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of an empty sequence".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "percentile fraction {p} outside [0, 1]"
        )));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite value {bad} in percentile input"
        )));
    }
    let n = values.len();
    let h = (n - 1) as f64 * p;
    let lo = (h.floor() as usize).min(n - 1);
    let frac = h - lo as f64;

    let mut buf = values.to_vec();
    let (_, &mut lower, upper) = buf.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return Ok(lower);
    }
    let upper = upper.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(lower + frac * (upper - lower))
}

/// Thresholds for all parameters, plus the parameters whose raw percentile
/// exceeded the fixed limit and had to be clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub pairs: PerParameter<ThresholdPair>,
    #[serde(default)]
    pub clamped: Vec<ParameterKind>,
}

impl ThresholdSet {
    pub fn pair(&self, p: ParameterKind) -> &ThresholdPair {
        &self.pairs[p]
    }

    pub fn fixed(&self) -> PerParameter<f64> {
        self.pairs.map(|_, t| t.fixed)
    }
}

fn adaptive_pair(p: ParameterKind, fixed: f64, raw: f64) -> Result<(ThresholdPair, bool)> {
    if !(fixed.is_finite() && fixed > 0.0) {
        return Err(Error::config(
            format!("fixed_thresholds.{p}"),
            format!("must be finite and positive, got {fixed}"),
        ));
    }
    let clamped = raw > fixed;
    Ok((ThresholdPair::new(p, fixed, raw.min(fixed))?, clamped))
}

/// Computes the adaptive limit for every parameter as the 95th percentile of
/// the whole series.
pub fn compute_thresholds(
    series: &SensorSeries,
    fixed: &PerParameter<f64>,
) -> Result<ThresholdSet> {
    compute_thresholds_at(series, fixed, ADAPTIVE_PERCENTILE)
}

pub fn compute_thresholds_at(
    series: &SensorSeries,
    fixed: &PerParameter<f64>,
    p: f64,
) -> Result<ThresholdSet> {
    let mut clamped = Vec::new();
    let mut pairs = Vec::with_capacity(ParameterKind::COUNT);
    for kind in ParameterKind::ALL {
        let values: Vec<f64> = series.values(kind).collect();
        let raw = percentile(&values, p)?;
        let (pair, was_clamped) = adaptive_pair(kind, fixed[kind], raw)?;
        if was_clamped {
            clamped.push(kind);
        }
        pairs.push(pair);
    }
    Ok(ThresholdSet {
        pairs: PerParameter::from_fn(|k| pairs[k.index()]),
        clamped,
    })
}

/// Per-reading adaptive limits from a trailing window of `window` readings
/// ending at (and including) each reading, clamped to `fixed`.
pub fn rolling_adaptive(values: &[f64], window: usize, p: f64, fixed: f64) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::config("labeling.window", "must be at least 1"));
    }
    (0..values.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            percentile(&values[start..=i], p).map(|a| a.min(fixed))
        })
        .collect()
}

/// The dual-threshold rule for one value.
pub fn label_value(x: f64, pair: &ThresholdPair) -> HealthLabel {
    if x > pair.fixed {
        HealthLabel::CriticalAlert
    } else if x > pair.adaptive {
        HealthLabel::EarlyWarning
    } else {
        HealthLabel::Normal
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertCounts {
    /// Readings above the fixed limit (CriticalAlert).
    pub fixed_alert_count: usize,
    /// Readings between the adaptive and fixed limits (EarlyWarning).
    pub adaptive_alert_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertSummary {
    pub counts: PerParameter<AlertCounts>,
}

impl AlertSummary {
    pub fn recount(labels: &[PerParameter<HealthLabel>]) -> Self {
        let mut counts = PerParameter::<AlertCounts>::default();
        for row in labels {
            for (p, label) in row.iter() {
                match label {
                    HealthLabel::CriticalAlert => counts[p].fixed_alert_count += 1,
                    HealthLabel::EarlyWarning => counts[p].adaptive_alert_count += 1,
                    HealthLabel::Normal => {}
                }
            }
        }
        AlertSummary { counts }
    }

    /// Writes the threshold/alert table:
    /// `parameter,fixed_threshold,adaptive_threshold,fixed_alerts,adaptive_alerts`.
    pub fn write_csv<W: Write>(&self, thresholds: &ThresholdSet, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "parameter",
            "fixed_threshold",
            "adaptive_threshold",
            "fixed_alerts",
            "adaptive_alerts",
        ])?;
        for p in ParameterKind::ALL {
            let t = thresholds.pair(p);
            let c = self.counts[p];
            w.write_record([
                p.name().to_owned(),
                t.fixed.to_string(),
                t.adaptive.to_string(),
                c.fixed_alert_count.to_string(),
                c.adaptive_alert_count.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// A series with one label per (reading, parameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub base: SensorSeries,
    pub labels: Vec<PerParameter<HealthLabel>>,
    pub thresholds_used: ThresholdSet,
    /// Per-reading adaptive limits when a rolling window was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rolling_adaptive: Option<PerParameter<Vec<f64>>>,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The threshold pair that applied to reading `i`.
    pub fn pair_at(&self, i: usize, p: ParameterKind) -> ThresholdPair {
        let mut pair = *self.thresholds_used.pair(p);
        if let Some(rolling) = &self.rolling_adaptive {
            pair.adaptive = rolling[p][i];
        }
        pair
    }

    pub fn summary(&self) -> AlertSummary {
        AlertSummary::recount(&self.labels)
    }

    pub fn labels_for(&self, p: ParameterKind) -> impl ExactSizeIterator<Item = HealthLabel> + '_ {
        self.labels.iter().map(move |l| l[p])
    }
}

/// Labels every reading against one global threshold set.
pub fn label_series(
    series: &SensorSeries,
    thresholds: &ThresholdSet,
) -> (LabeledSeries, AlertSummary) {
    let labels: Vec<PerParameter<HealthLabel>> = series
        .readings()
        .iter()
        .map(|r| PerParameter::from_fn(|p| label_value(r.values[p], thresholds.pair(p))))
        .collect();
    let summary = AlertSummary::recount(&labels);
    (
        LabeledSeries {
            base: series.clone(),
            labels,
            thresholds_used: thresholds.clone(),
            rolling_adaptive: None,
        },
        summary,
    )
}

/// Labels with trailing-window adaptive limits. The fixed limits come from
/// `thresholds`; its adaptive values are kept as the global reference only.
pub fn label_series_rolling(
    series: &SensorSeries,
    thresholds: &ThresholdSet,
    window: usize,
    p: f64,
) -> Result<(LabeledSeries, AlertSummary)> {
    let rolling = ParameterKind::ALL
        .iter()
        .map(|&k| {
            let values: Vec<f64> = series.values(k).collect();
            rolling_adaptive(&values, window, p, thresholds.pair(k).fixed)
        })
        .collect::<Result<Vec<_>>>()?;
    let rolling = PerParameter::from_fn(|k| rolling[k.index()].clone());
    let labels: Vec<PerParameter<HealthLabel>> = series
        .readings()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            PerParameter::from_fn(|k| {
                let x = r.values[k];
                let fixed = thresholds.pair(k).fixed;
                if x > fixed {
                    HealthLabel::CriticalAlert
                } else if x > rolling[k][i] {
                    HealthLabel::EarlyWarning
                } else {
                    HealthLabel::Normal
                }
            })
        })
        .collect();
    let summary = AlertSummary::recount(&labels);
    Ok((
        LabeledSeries {
            base: series.clone(),
            labels,
            thresholds_used: thresholds.clone(),
            rolling_adaptive: Some(rolling),
        },
        summary,
    ))
}

fn provenance_tag(p: &Provenance) -> String {
    match p {
        Provenance::Real => "real".to_owned(),
        Provenance::Injected(k) => format!("injected:{}", k.name()),
    }
}

fn parse_provenance(s: &str) -> Result<Provenance> {
    match s.split_once(':') {
        None if s == "real" => Ok(Provenance::Real),
        Some(("injected", k)) => Ok(Provenance::Injected(k.parse()?)),
        _ => Err(Error::Domain(format!("bad provenance `{s}`"))),
    }
}

/// Writes the labeled table: timestamp, five values, five `<parameter>_label`
/// columns and a provenance column (`real` or `injected:<parameter>`).
pub fn write_labeled_csv<W: Write>(labeled: &LabeledSeries, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["timestamp".to_owned()];
    header.extend(ParameterKind::ALL.map(|p| p.name().to_owned()));
    header.extend(ParameterKind::ALL.map(|p| format!("{}_label", p.name())));
    header.push("provenance".to_owned());
    w.write_record(&header)?;
    for (r, labels) in labeled.base.readings().iter().zip(&labeled.labels) {
        let mut row = vec![format_timestamp(&r.timestamp)];
        row.extend(ParameterKind::ALL.map(|p| r.values[p].to_string()));
        row.extend(ParameterKind::ALL.map(|p| labels[p].name().to_owned()));
        row.push(provenance_tag(&r.provenance));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a table written by [`write_labeled_csv`]. Strict: any malformed row
/// is an error, since this file is a pipeline artifact rather than raw input.
pub fn read_labeled_csv<R: Read>(source: R, thresholds: &ThresholdSet) -> Result<LabeledSeries> {
    let mut reader = csv::Reader::from_reader(source);
    let mut readings = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 12 {
            return Err(Error::Domain(format!(
                "labeled row {}: expected 12 fields, got {}",
                line + 1,
                record.len()
            )));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| Error::Domain(format!("labeled row {}: bad timestamp", line + 1)))?;
        let mut values = [0.0; 5];
        for (i, v) in values.iter_mut().enumerate() {
            *v = record[1 + i]
                .parse()
                .map_err(|_| Error::Domain(format!("labeled row {}: bad value", line + 1)))?;
        }
        let mut row_labels = [HealthLabel::Normal; 5];
        for (i, l) in row_labels.iter_mut().enumerate() {
            *l = record[6 + i].parse()?;
        }
        let mut reading = SensorReading::new(ts, PerParameter::from_array(values))?;
        reading.provenance = parse_provenance(&record[11])?;
        readings.push(reading);
        labels.push(PerParameter::from_array(row_labels));
    }
    Ok(LabeledSeries {
        base: SensorSeries::new(readings)?,
        labels,
        thresholds_used: thresholds.clone(),
        rolling_adaptive: None,
    })
}
