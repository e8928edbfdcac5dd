//! Seeded synthetic baseline data and critical-alert injection.
//!
//! The baseline is an independent stationary AR(1) process per parameter. The
//! default means and standard deviations are calibrated so that the in-sample
//! 95th percentile of each parameter sits on the reference adaptive limits
//! (1.64 mm/s, 55.01 °C, 2666.74 m³/h, 4.77 bar, 231.89 A) while staying far
//! below the fixed limits.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ParameterKind, PerParameter, Provenance, SensorReading, SensorSeries};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Stationary AR(1) process: `x[t] = mean + φ·(x[t-1] − mean) + e[t]`, with the
/// innovation variance chosen so the marginal standard deviation is `stddev`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessParams {
    pub mean: f64,
    pub stddev: f64,
    pub ar_coefficient: f64,
}

impl ProcessParams {
    pub const fn new(mean: f64, stddev: f64, ar_coefficient: f64) -> Self {
        ProcessParams {
            mean,
            stddev,
            ar_coefficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub processes: PerParameter<ProcessParams>,
    pub sample_count: usize,
    pub start_timestamp: DateTime<Utc>,
    pub interval_seconds: u32,
    pub master_seed: u64,
}

pub const DEFAULT_AR_COEFFICIENT: f64 = 0.7;

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            processes: PerParameter {
                vibration: ProcessParams::new(1.20, 0.27, DEFAULT_AR_COEFFICIENT),
                temperature: ProcessParams::new(45.0, 6.085, DEFAULT_AR_COEFFICIENT),
                flow: ProcessParams::new(2600.0, 40.56, DEFAULT_AR_COEFFICIENT),
                pressure: ProcessParams::new(4.20, 0.3465, DEFAULT_AR_COEFFICIENT),
                current: ProcessParams::new(227.0, 2.97, DEFAULT_AR_COEFFICIENT),
            },
            sample_count: 5000,
            start_timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            interval_seconds: 60,
            master_seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (p, proc_) in self.processes.iter() {
            if !proc_.mean.is_finite() {
                return Err(Error::config(
                    format!("generator.processes.{p}.mean"),
                    "must be finite",
                ));
            }
            if !(proc_.stddev.is_finite() && proc_.stddev > 0.0) {
                return Err(Error::config(
                    format!("generator.processes.{p}.stddev"),
                    "must be > 0",
                ));
            }
            if !(0.0..1.0).contains(&proc_.ar_coefficient) {
                return Err(Error::config(
                    format!("generator.processes.{p}.ar_coefficient"),
                    "must lie in [0, 1)",
                ));
            }
        }
        if self.sample_count < 100 {
            return Err(Error::config(
                "generator.sample_count",
                "must be at least 100",
            ));
        }
        if self.interval_seconds < 1 {
            return Err(Error::config(
                "generator.interval_seconds",
                "must be at least 1",
            ));
        }
        Ok(())
    }
}

fn ar1_path(params: ProcessParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let phi = params.ar_coefficient;
    let innovation = params.stddev * (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(n);
    let z: f64 = rng.sample(StandardNormal);
    let mut x = params.mean + params.stddev * z;
    out.push(x);
    for _ in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        x = params.mean + phi * (x - params.mean) + innovation * z;
        out.push(x);
    }
    out
}

/// Generates `sample_count` readings at a fixed interval. Each parameter uses
/// its own sub-seed, so the output is bit-identical for a given config.
pub fn generate(config: &GeneratorConfig) -> Result<SensorSeries> {
    config.validate()?;
    let n = config.sample_count;
    let paths: Vec<Vec<f64>> = ParameterKind::ALL
        .par_iter()
        .map(|&p| {
            let seed = derive_seed(config.master_seed, &format!("generate/{}", p.name()));
            ar1_path(config.processes[p], n, seed)
        })
        .collect();
    let step = Duration::seconds(i64::from(config.interval_seconds));
    let readings = (0..n)
        .map(|i| {
            let values = PerParameter::from_fn(|p| paths[p.index()][i]);
            SensorReading::new(config.start_timestamp + step * i as i32, values)
        })
        .collect::<Result<Vec<_>>>()?;
    SensorSeries::new(readings)
}

/// How many critical alerts to inject and how far above the fixed limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjectionSpec {
    pub count_per_parameter: usize,
    /// Overshoot above the fixed limit as fractions `(low, high)`.
    pub overshoot_range: (f64, f64),
    /// Minimum index distance between any two injections.
    pub min_gap: usize,
    pub seed: u64,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        InjectionSpec {
            count_per_parameter: 10,
            overshoot_range: (0.15, 0.35),
            min_gap: 10,
            seed: 7,
        }
    }
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.overshoot_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::config(
                "injection.overshoot_range",
                format!("need 0 < low < high, got ({lo}, {hi})"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionRecord {
    pub index: usize,
    pub parameter: ParameterKind,
    pub original: f64,
    pub injected: f64,
}

/// Injection records sorted by reading index.
pub type InjectionLog = Vec<InjectionRecord>;

/// Overwrites `count_per_parameter` readings per parameter with values drawn
/// uniformly from `[(1+low)·fixed, (1+high)·fixed]`.
///
/// The series is cut into `5·count` equal slots and one reading is picked per
/// slot, at least `min_gap` samples after the previous pick; slots are dealt
/// to parameters by a seeded shuffle. Only one parameter changes per reading.
pub fn inject(
    series: &SensorSeries,
    spec: &InjectionSpec,
    fixed: &PerParameter<f64>,
) -> Result<(SensorSeries, InjectionLog)> {
    spec.validate()?;
    let total = spec.count_per_parameter * ParameterKind::COUNT;
    if total == 0 {
        return Ok((series.clone(), Vec::new()));
    }
    let gap = spec.min_gap.max(1);
    let len = series.len();
    if len <= total * gap {
        return Err(Error::Capacity {
            len,
            requested: total,
            min_gap: gap,
        });
    }

    let mut rng = rng_from_seed(spec.seed);
    let mut owners: Vec<ParameterKind> = ParameterKind::ALL
        .iter()
        .flat_map(|&p| std::iter::repeat_n(p, spec.count_per_parameter))
        .collect();
    owners.shuffle(&mut rng);

    let slot = len / total;
    let (lo, hi) = spec.overshoot_range;
    let mut out = series.clone();
    let mut log = Vec::with_capacity(total);
    for (k, parameter) in owners.into_iter().enumerate() {
        let index = k * slot + rng.gen_range(0..=slot - gap);
        let overshoot = rng.gen_range(lo..=hi);
        let injected = fixed[parameter] * (1.0 + overshoot);
        let reading = &mut out.readings_mut()[index];
        log.push(InjectionRecord {
            index,
            parameter,
            original: reading.values[parameter],
            injected,
        });
        reading.values[parameter] = injected;
        reading.provenance = Provenance::Injected(parameter);
    }
    Ok((out, log))
}

/// Re-attaches injection provenance to a series read back from CSV, checking
/// that each logged value is present.
pub fn apply_log(series: SensorSeries, log: &[InjectionRecord]) -> Result<SensorSeries> {
    let mut series = series;
    let readings = series.readings_mut();
    for rec in log {
        let r = readings.get_mut(rec.index).ok_or_else(|| {
            Error::Contract(format!("injection index {} out of range", rec.index))
        })?;
        if r.values[rec.parameter] != rec.injected {
            return Err(Error::Contract(format!(
                "reading {} {} is {}, injection log says {}",
                rec.index, rec.parameter, r.values[rec.parameter], rec.injected
            )));
        }
        r.provenance = Provenance::Injected(rec.parameter);
    }
    Ok(series)
}
