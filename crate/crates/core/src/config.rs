//! The single JSON document that drives every pipeline stage.
//!
//! All sections are optional and fall back to defaults; unknown keys are
//! rejected at every level. Component seeds are not configured separately:
//! each is derived from the one master `seed`, so `--seed` alone controls the
//! whole run.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{ParameterKind, PerParameter};
use crate::error::{Error, Result};
use crate::ingest::{CsvSchema, GlitchBounds};
use crate::models::{ModelConfig, ModelKind};
use crate::rng::derive_seed;
use crate::stream::Pacing;
use crate::synth::{GeneratorConfig, InjectionSpec, ProcessParams};
use crate::thresholds::{ADAPTIVE_PERCENTILE, DEFAULT_FIXED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSettings {
    pub processes: PerParameter<ProcessParams>,
    pub sample_count: usize,
    pub start_timestamp: DateTime<Utc>,
    pub interval_seconds: u32,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        GeneratorSettings {
            processes: g.processes,
            sample_count: g.sample_count,
            start_timestamp: g.start_timestamp,
            interval_seconds: g.interval_seconds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjectionSettings {
    pub count_per_parameter: usize,
    pub overshoot_range: (f64, f64),
    pub min_gap: usize,
}

impl Default for InjectionSettings {
    fn default() -> Self {
        let s = InjectionSpec::default();
        InjectionSettings {
            count_per_parameter: s.count_per_parameter,
            overshoot_range: s.overshoot_range,
            min_gap: s.min_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelingSettings {
    /// Percentile for the adaptive limit, as a fraction.
    pub percentile: f64,
    /// Trailing window length for a rolling adaptive limit; `None` uses one
    /// limit computed over the whole series.
    pub window: Option<usize>,
}

impl Default for LabelingSettings {
    fn default() -> Self {
        LabelingSettings {
            percentile: ADAPTIVE_PERCENTILE,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSettings {
    pub test_fraction: f64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            test_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSettings {
    /// Replay speed multiplier; `None` replays instantly.
    pub speed: Option<f64>,
}

impl SimulateSettings {
    pub fn pacing(&self) -> Pacing {
        self.speed.map_or(Pacing::Instant, Pacing::Speed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSettings {
    /// Real sensor log to clean instead of generating a synthetic one.
    pub input_csv: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathSettings {
    fn default() -> Self {
        PathSettings {
            input_csv: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub fixed_thresholds: PerParameter<f64>,
    pub generator: GeneratorSettings,
    pub injection: InjectionSettings,
    pub labeling: LabelingSettings,
    /// Column names of `paths.input_csv`.
    pub schema: CsvSchema,
    /// Plausibility bounds; defaults to `[0, 3 × fixed]`.
    pub glitch_bounds: Option<GlitchBounds>,
    pub models: ModelConfig,
    pub split: SplitSettings,
    pub simulate: SimulateSettings,
    pub paths: PathSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            fixed_thresholds: DEFAULT_FIXED,
            generator: GeneratorSettings::default(),
            injection: InjectionSettings::default(),
            labeling: LabelingSettings::default(),
            schema: CsvSchema::default(),
            glitch_bounds: None,
            models: ModelConfig::default(),
            split: SplitSettings::default(),
            simulate: SimulateSettings::default(),
            paths: PathSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        for (p, &f) in self.fixed_thresholds.iter() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::config(
                    format!("fixed_thresholds.{p}"),
                    format!("must be finite and > 0, got {f}"),
                ));
            }
        }
        if self.paths.input_csv.is_none() {
            self.generator_config().validate()?;
        }
        self.injection_spec().validate()?;
        let pct = self.labeling.percentile;
        if !(0.0..=1.0).contains(&pct) {
            return Err(Error::config("labeling.percentile", "must lie in [0, 1]"));
        }
        if self.labeling.window == Some(0) {
            return Err(Error::config("labeling.window", "must be at least 1"));
        }
        let tf = self.split.test_fraction;
        if !(tf > 0.0 && tf < 1.0) {
            return Err(Error::config("split.test_fraction", "must lie in (0, 1)"));
        }
        if let Some(k) = self.simulate.speed {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::config("simulate.speed", "must be finite and > 0"));
            }
        }
        let m = &self.models;
        m.forest.tree.validate()?;
        if m.forest.n_trees == 0 {
            return Err(Error::config("models.forest.n_trees", "must be at least 1"));
        }
        m.gbt.validate()?;
        if !(m.svm.c.is_finite() && m.svm.c > 0.0) {
            return Err(Error::config("models.svm.c", "must be finite and > 0"));
        }
        self.glitch_bounds()?;
        Ok(())
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        let g = &self.generator;
        GeneratorConfig {
            processes: g.processes,
            sample_count: g.sample_count,
            start_timestamp: g.start_timestamp,
            interval_seconds: g.interval_seconds,
            master_seed: derive_seed(self.seed, "generate"),
        }
    }

    pub fn injection_spec(&self) -> InjectionSpec {
        let i = &self.injection;
        InjectionSpec {
            count_per_parameter: i.count_per_parameter,
            overshoot_range: i.overshoot_range,
            min_gap: i.min_gap,
            seed: derive_seed(self.seed, "inject"),
        }
    }

    pub fn glitch_bounds(&self) -> Result<GlitchBounds> {
        match self.glitch_bounds {
            Some(b) => Ok(b),
            None => GlitchBounds::from_fixed(&self.fixed_thresholds),
        }
    }

    pub fn split_seed(&self, p: ParameterKind) -> u64 {
        derive_seed(self.seed, &format!("split/{}", p.name()))
    }

    pub fn train_seed(&self, kind: ModelKind, p: ParameterKind) -> u64 {
        derive_seed(self.seed, &format!("train/{}/{}", kind.name(), p.name()))
    }

    /// Name of the dataset in reports: the input file stem, or `synthetic`.
    pub fn dataset_name(&self) -> String {
        self.paths
            .input_csv
            .as_deref()
            .and_then(Path::file_stem)
            .map_or_else(
                || "synthetic".to_owned(),
                |s| s.to_string_lossy().into_owned(),
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_json(&cfg.to_json(), Path::new("x.json")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_document_is_default() {
        let cfg = PipelineConfig::from_json("{}", Path::new("x.json")).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for doc in [
            r#"{"sed": 1}"#,
            r#"{"split": {"fraction": 0.2}}"#,
            r#"{"models": {"gbt": {"eta": 0.1}}}"#,
            r#"{"fixed_thresholds": {"vibration": 5, "temperature": 80, "flow": 2800, "pressure": 6, "current": 240, "speed": 1}}"#,
        ] {
            let err = PipelineConfig::from_json(doc, Path::new("x.json")).unwrap_err();
            assert!(matches!(err, Error::Json { .. }), "{doc}");
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = PipelineConfig::from_json(r#"{"split": {"test_fraction": 1.5}}"#, Path::new("c"))
            .unwrap_err();
        assert!(err.to_string().contains("split.test_fraction"));
        let err = PipelineConfig::from_json(r#"{"simulate": {"speed": -2}}"#, Path::new("c"))
            .unwrap_err();
        assert!(err.to_string().contains("simulate.speed"));
    }

    #[test]
    fn seeds_follow_master() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            seed: 43,
            ..a.clone()
        };
        assert_ne!(
            a.generator_config().master_seed,
            b.generator_config().master_seed
        );
        assert_ne!(a.injection_spec().seed, b.injection_spec().seed);
        assert_ne!(
            a.train_seed(ModelKind::Forest, ParameterKind::Flow),
            a.train_seed(ModelKind::Forest, ParameterKind::Pressure)
        );
    }
}
