//! Replays a series reading by reading through the thresholds and the trained
//! models, emitting an [`AlertEvent`] whenever any channel is not Normal.
//!
//! The threshold channel and each model channel are reported side by side;
//! nothing here fuses them. The consumer callback runs synchronously, so a
//! slow consumer delays the replay clock instead of losing events.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{HealthLabel, ParameterKind, SensorSeries};
use crate::error::{Error, Result};
use crate::models::{FeatureLayout, ModelKind, TrainedModel};
use crate::thresholds::{label_value, ThresholdSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventSource {
    Threshold,
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub timestamp: DateTime<Utc>,
    pub parameter: ParameterKind,
    pub value: f64,
    pub threshold_label: HealthLabel,
    pub model_labels: BTreeMap<ModelKind, HealthLabel>,
    /// `Threshold` when the threshold channel fired, otherwise `Model`.
    pub source: EventSource,
}

/// Replay speed. `Speed(k)` waits `Δt / k` of wall time between readings.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pacing {
    #[default]
    Instant,
    Speed(f64),
}

pub trait Clock {
    fn sleep(&mut self, d: Duration);
}

/// Sleeps the current thread.
#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Models grouped by the parameter they predict.
#[derive(Debug, Clone, Default)]
pub struct ModelBank {
    models: BTreeMap<ParameterKind, Vec<TrainedModel>>,
}

impl ModelBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a model after checking its stored structure, its layout and that
    /// no model of the same kind is already registered for its target.
    pub fn insert(&mut self, model: TrainedModel) -> Result<()> {
        model.check_consistent()?;
        let target = model.target();
        if let FeatureLayout::Univariate(p) = model.layout() {
            if p != target {
                return Err(Error::Contract(format!(
                    "{} model for {target} reads only {p}",
                    model.kind()
                )));
            }
        }
        let slot = self.models.entry(target).or_default();
        if slot.iter().any(|m| m.kind() == model.kind()) {
            return Err(Error::Contract(format!(
                "duplicate {} model for {target}",
                model.kind()
            )));
        }
        slot.push(model);
        slot.sort_by_key(TrainedModel::kind);
        Ok(())
    }

    pub fn for_parameter(&self, p: ParameterKind) -> &[TrainedModel] {
        self.models.get(&p).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.models.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs the replay, handing each event to `sink` in timestamp order. Returns
/// the number of events emitted.
pub fn replay<C, F>(
    series: &SensorSeries,
    thresholds: &ThresholdSet,
    models: &ModelBank,
    pacing: Pacing,
    clock: &mut C,
    mut sink: F,
) -> Result<usize>
where
    C: Clock + ?Sized,
    F: FnMut(AlertEvent) -> Result<()>,
{
    if let Pacing::Speed(k) = pacing {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::config("simulate.speed", "must be finite and > 0"));
        }
    }
    let mut emitted = 0;
    let mut previous: Option<DateTime<Utc>> = None;
    for reading in series.readings() {
        if let (Pacing::Speed(k), Some(prev)) = (pacing, previous) {
            let gap = (reading.timestamp - prev).to_std().unwrap_or_default();
            clock.sleep(gap.div_f64(k));
        }
        previous = Some(reading.timestamp);

        for p in ParameterKind::ALL {
            let value = reading.values[p];
            let threshold_label = label_value(value, thresholds.pair(p));
            let model_labels: BTreeMap<ModelKind, HealthLabel> = models
                .for_parameter(p)
                .iter()
                .map(|m| (m.kind(), m.predict_reading(&reading.values)))
                .collect();
            let model_fired = model_labels.values().any(|&l| l != HealthLabel::Normal);
            if threshold_label == HealthLabel::Normal && !model_fired {
                continue;
            }
            let source = if threshold_label != HealthLabel::Normal {
                EventSource::Threshold
            } else {
                EventSource::Model
            };
            sink(AlertEvent {
                timestamp: reading.timestamp,
                parameter: p,
                value,
                threshold_label,
                model_labels,
                source,
            })?;
            emitted += 1;
        }
    }
    Ok(emitted)
}

/// Instant replay collected into a vector.
pub fn replay_collect(
    series: &SensorSeries,
    thresholds: &ThresholdSet,
    models: &ModelBank,
) -> Result<Vec<AlertEvent>> {
    let mut events = Vec::new();
    replay(
        series,
        thresholds,
        models,
        Pacing::Instant,
        &mut SystemClock,
        |e| {
            events.push(e);
            Ok(())
        },
    )?;
    Ok(events)
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(events: &[AlertEvent], mut sink: W) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).map_err(|source| Error::Json {
            path: "<events>".into(),
            source,
        })?;
        writeln!(sink, "{line}").map_err(|e| Error::io("<events>", e))?;
    }
    Ok(())
}
