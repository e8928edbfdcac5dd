//! Value types shared by every pipeline stage.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five monitored pump parameters, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterKind {
    Vibration,
    Temperature,
    Flow,
    Pressure,
    Current,
}

impl ParameterKind {
    pub const COUNT: usize = 5;

    pub const ALL: [ParameterKind; 5] = [
        ParameterKind::Vibration,
        ParameterKind::Temperature,
        ParameterKind::Flow,
        ParameterKind::Pressure,
        ParameterKind::Current,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParameterKind::Vibration => "vibration",
            ParameterKind::Temperature => "temperature",
            ParameterKind::Flow => "flow",
            ParameterKind::Pressure => "pressure",
            ParameterKind::Current => "current",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ParameterKind::Vibration => "mm/s",
            ParameterKind::Temperature => "°C",
            ParameterKind::Flow => "m³/h",
            ParameterKind::Pressure => "bar",
            ParameterKind::Current => "A",
        }
    }

    /// Human-readable name with capitalised first letter, e.g. `Flow`.
    pub fn title(self) -> &'static str {
        match self {
            ParameterKind::Vibration => "Vibration",
            ParameterKind::Temperature => "Temperature",
            ParameterKind::Flow => "Flow",
            ParameterKind::Pressure => "Pressure",
            ParameterKind::Current => "Current",
        }
    }
}

impl fmt::Display for ParameterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParameterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParameterKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown parameter `{s}`")))
    }
}

/// One value of `T` per parameter, laid out in canonical order.
///
/// Serializes as an object keyed by parameter name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerParameter<T> {
    pub vibration: T,
    pub temperature: T,
    pub flow: T,
    pub pressure: T,
    pub current: T,
}

impl<T> PerParameter<T> {
    pub fn from_fn(mut f: impl FnMut(ParameterKind) -> T) -> Self {
        PerParameter {
            vibration: f(ParameterKind::Vibration),
            temperature: f(ParameterKind::Temperature),
            flow: f(ParameterKind::Flow),
            pressure: f(ParameterKind::Pressure),
            current: f(ParameterKind::Current),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(ParameterKind, &T) -> U) -> PerParameter<U> {
        PerParameter::from_fn(|p| f(p, &self[p]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParameterKind, &T)> {
        ParameterKind::ALL.into_iter().map(move |p| (p, &self[p]))
    }
}

impl<T: Copy> PerParameter<T> {
    pub fn to_array(&self) -> [T; 5] {
        ParameterKind::ALL.map(|p| self[p])
    }

    pub fn from_array(values: [T; 5]) -> Self {
        PerParameter::from_fn(|p| values[p.index()])
    }
}

impl<T> Index<ParameterKind> for PerParameter<T> {
    type Output = T;

    fn index(&self, p: ParameterKind) -> &T {
        match p {
            ParameterKind::Vibration => &self.vibration,
            ParameterKind::Temperature => &self.temperature,
            ParameterKind::Flow => &self.flow,
            ParameterKind::Pressure => &self.pressure,
            ParameterKind::Current => &self.current,
        }
    }
}

impl<T> IndexMut<ParameterKind> for PerParameter<T> {
    fn index_mut(&mut self, p: ParameterKind) -> &mut T {
        match p {
            ParameterKind::Vibration => &mut self.vibration,
            ParameterKind::Temperature => &mut self.temperature,
            ParameterKind::Flow => &mut self.flow,
            ParameterKind::Pressure => &mut self.pressure,
            ParameterKind::Current => &mut self.current,
        }
    }
}

/// Where a reading's values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    /// Exactly one parameter of this reading was overwritten by fault injection.
    Injected(ParameterKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub timestamp: DateTime<Utc>,
    pub values: PerParameter<f64>,
    pub provenance: Provenance,
}

impl SensorReading {
    pub fn new(timestamp: DateTime<Utc>, values: PerParameter<f64>) -> Result<Self> {
        if let Some((p, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite {p} value {v}")));
        }
        Ok(SensorReading {
            timestamp,
            values,
            provenance: Provenance::Real,
        })
    }

    pub fn value(&self, p: ParameterKind) -> f64 {
        self.values[p]
    }
}

/// Time-ordered readings with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SensorReading>", into = "Vec<SensorReading>")]
pub struct SensorSeries {
    readings: Vec<SensorReading>,
}

impl SensorSeries {
    /// Builds a series, rejecting out-of-order timestamps and non-finite values.
    pub fn new(readings: Vec<SensorReading>) -> Result<Self> {
        for w in readings.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(Error::Domain(format!(
                    "timestamps not strictly increasing at {}",
                    w[1].timestamp
                )));
            }
        }
        if let Some(r) = readings
            .iter()
            .find(|r| r.values.iter().any(|(_, v)| !v.is_finite()))
        {
            return Err(Error::Domain(format!(
                "non-finite value at {}",
                r.timestamp
            )));
        }
        Ok(SensorSeries { readings })
    }

    /// Wraps readings already known to satisfy the series invariants
    /// (e.g. a subsequence of an existing series).
    pub(crate) fn from_ordered(readings: Vec<SensorReading>) -> Self {
        debug_assert!(readings.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        SensorSeries { readings }
    }

    pub fn readings(&self) -> &[SensorReading] {
        &self.readings
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn values(&self, p: ParameterKind) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.readings.iter().map(move |r| r.values[p])
    }

    pub fn into_readings(self) -> Vec<SensorReading> {
        self.readings
    }

    /// Mutable access for stages that rewrite values in place without
    /// touching timestamps.
    pub(crate) fn readings_mut(&mut self) -> &mut [SensorReading] {
        &mut self.readings
    }
}

impl TryFrom<Vec<SensorReading>> for SensorSeries {
    type Error = Error;

    fn try_from(readings: Vec<SensorReading>) -> Result<Self> {
        SensorSeries::new(readings)
    }
}

impl From<SensorSeries> for Vec<SensorReading> {
    fn from(s: SensorSeries) -> Self {
        s.readings
    }
}

/// Health state of a single parameter reading, ordered by severity.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub enum HealthLabel {
    #[default]
    Normal,
    EarlyWarning,
    CriticalAlert,
}

impl HealthLabel {
    pub const COUNT: usize = 3;

    pub const ALL: [HealthLabel; 3] = [
        HealthLabel::Normal,
        HealthLabel::EarlyWarning,
        HealthLabel::CriticalAlert,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        HealthLabel::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            HealthLabel::Normal => "Normal",
            HealthLabel::EarlyWarning => "EarlyWarning",
            HealthLabel::CriticalAlert => "CriticalAlert",
        }
    }
}

impl fmt::Display for HealthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HealthLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HealthLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown health label `{s}`")))
    }
}

/// Fixed engineering limit and adaptive percentile limit for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPair {
    pub parameter: ParameterKind,
    pub fixed: f64,
    pub adaptive: f64,
}

impl ThresholdPair {
    pub fn new(parameter: ParameterKind, fixed: f64, adaptive: f64) -> Result<Self> {
        for (name, v) in [("fixed", fixed), ("adaptive", adaptive)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "{parameter} {name} threshold must be finite and positive, got {v}"
                )));
            }
        }
        if adaptive > fixed {
            return Err(Error::Domain(format!(
                "{parameter} adaptive threshold {adaptive} exceeds fixed threshold {fixed}"
            )));
        }
        Ok(ThresholdPair {
            parameter,
            fixed,
            adaptive,
        })
    }
}
