//! The end-to-end workflow as separately runnable stages that communicate
//! only through files in the output directory:
//!
//! | stage    | reads                                   | writes |
//! |----------|-----------------------------------------|--------|
//! | generate | `paths.input_csv` (optional)            | `baseline.csv`, `cleaning.json` |
//! | inject   | `baseline.csv`                          | `injected.csv`, `injections.json` |
//! | label    | `injected.csv`, `injections.json`       | `thresholds.json`, `labeled.csv`, `alert_counts.csv` |
//! | train    | `labeled.csv`, `thresholds.json`        | `split.json`, `models/<kind>_<parameter>.json` |
//! | evaluate | labels, split, models                   | `report.csv`, `summary.csv`, `summary.txt`, `confusion/<kind>.{csv,svg}` |
//! | simulate | labels, models                          | `events.jsonl` |
//! | plot     | labels, `injections.json`               | `plots/<parameter>.svg` |
//!
//! After every stage, successful or not, `manifest.json` records its status,
//! the seeds it used and SHA-256 digests of what it read and wrote. Nothing
//! time-dependent is written anywhere, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::domain::{HealthLabel, ParameterKind, PerParameter};
use crate::error::{Error, Result};
use crate::eval::{confusion, stratified_split_indices, EvaluationReport, ReportEntry, Split};
use crate::ingest::{load_clean, parse_csv, write_csv, CsvSchema};
use crate::models::{Dataset, ModelKind, TrainedModel};
use crate::plot::{confusion_svg, signal_svg};
use crate::stream::{replay, AlertEvent, ModelBank, SystemClock};
use crate::synth::{apply_log, generate, inject, InjectionLog};
use crate::thresholds::{
    compute_thresholds_at, label_series, label_series_rolling, read_labeled_csv, rolling_adaptive,
    write_labeled_csv, LabeledSeries, ThresholdSet,
};

pub const BASELINE_CSV: &str = "baseline.csv";
pub const CLEANING_JSON: &str = "cleaning.json";
pub const INJECTED_CSV: &str = "injected.csv";
pub const INJECTIONS_JSON: &str = "injections.json";
pub const THRESHOLDS_JSON: &str = "thresholds.json";
pub const LABELED_CSV: &str = "labeled.csv";
pub const ALERT_COUNTS_CSV: &str = "alert_counts.csv";
pub const SPLIT_JSON: &str = "split.json";
pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const EVENTS_JSONL: &str = "events.jsonl";
pub const MANIFEST_JSON: &str = "manifest.json";

pub fn model_path(kind: ModelKind, p: ParameterKind) -> String {
    format!("models/{}_{}.json", kind.name(), p.name())
}

pub fn plot_path(p: ParameterKind) -> String {
    format!("plots/{}.svg", p.name())
}

pub fn confusion_path(kind: ModelKind, ext: &str) -> String {
    format!("confusion/{}.{ext}", kind.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Inject,
    Label,
    Train,
    Evaluate,
    Simulate,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Generate,
        Stage::Inject,
        Stage::Label,
        Stage::Train,
        Stage::Evaluate,
        Stage::Simulate,
        Stage::Plot,
    ];

    /// The stages `run-all` executes, in order.
    pub const RUN_ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Inject,
        Stage::Label,
        Stage::Train,
        Stage::Evaluate,
        Stage::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Inject => "inject",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Simulate => "simulate",
            Stage::Plot => "plot",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every file read, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, keyed by path relative to the output directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// SHA-256 of the configuration as pretty JSON, with the output directory blanked.
    pub config_sha256: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

/// Kept alongside the labels so later stages can rebuild exactly what the
/// label stage used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsDoc {
    pub percentile: f64,
    pub window: Option<usize>,
    pub thresholds: ThresholdSet,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Default)]
struct Outcome {
    summary: String,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// Runs stages against one configuration and output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.paths.out_dir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out_dir().join(rel)
    }

    /// Runs one stage and records it in the manifest. Returns the stage's
    /// one-line summary.
    pub fn run(&self, stage: Stage) -> Result<String> {
        let mut out = Outcome::default();
        let result = match stage {
            Stage::Generate => self.generate(&mut out),
            Stage::Inject => self.inject(&mut out),
            Stage::Label => self.label(&mut out),
            Stage::Train => self.train(&mut out),
            Stage::Evaluate => self.evaluate(&mut out),
            Stage::Simulate => self.simulate(&mut out),
            Stage::Plot => self.plot(&mut out),
        };
        let record = StageRecord {
            status: if result.is_ok() {
                StageStatus::Complete
            } else {
                StageStatus::Failed
            },
            error: result.as_ref().err().map(ToString::to_string),
            seeds: out.seeds,
            inputs: out.inputs,
            outputs: out.outputs,
        };
        let recorded = self.record(stage, record);
        result?;
        recorded?;
        Ok(format!("{stage}: {}", out.summary))
    }

    /// Runs the whole workflow, stopping at the first failing stage.
    pub fn run_all(&self) -> Result<Vec<String>> {
        Stage::RUN_ALL.into_iter().map(|s| self.run(s)).collect()
    }

    pub fn read_manifest(&self) -> Result<Option<Manifest>> {
        let path = self.path(MANIFEST_JSON);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    fn record(&self, stage: Stage, record: StageRecord) -> Result<()> {
        // Where the outputs go is not part of what produced them.
        let mut effective = self.config.clone();
        effective.paths.out_dir = PathBuf::new();
        let config_sha256 = sha256_hex(effective.to_json().as_bytes());
        let mut manifest = match self.read_manifest() {
            Ok(Some(m)) if m.seed == self.config.seed && m.config_sha256 == config_sha256 => m,
            // A different configuration invalidates earlier records.
            _ => Manifest {
                seed: self.config.seed,
                config_sha256,
                stages: BTreeMap::new(),
            },
        };
        manifest.stages.insert(stage, record);
        write_json(&self.path(MANIFEST_JSON), &manifest)
    }

    // ---- file helpers that also fill in the manifest digests ----

    fn read_input(&self, out: &mut Outcome, rel: &str) -> Result<Vec<u8>> {
        let path = self.path(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        out.inputs.insert(rel.to_owned(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn read_input_json<T: DeserializeOwned>(&self, out: &mut Outcome, rel: &str) -> Result<T> {
        let bytes = self.read_input(out, rel)?;
        serde_json::from_slice(&bytes).map_err(|source| Error::Json {
            path: self.path(rel),
            source,
        })
    }

    fn write_output(&self, out: &mut Outcome, rel: &str, bytes: &[u8]) -> Result<()> {
        write_bytes(&self.path(rel), bytes)?;
        out.outputs.insert(rel.to_owned(), sha256_hex(bytes));
        Ok(())
    }

    fn write_output_json<T: Serialize>(
        &self,
        out: &mut Outcome,
        rel: &str,
        value: &T,
    ) -> Result<()> {
        self.write_output(out, rel, &to_json_bytes(value))
    }

    fn write_output_with(
        &self,
        out: &mut Outcome,
        rel: &str,
        f: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    ) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_output(out, rel, &buf)
    }

    // ---- shared loaders ----

    fn load_labeled(&self, out: &mut Outcome) -> Result<(LabeledSeries, ThresholdsDoc)> {
        let doc: ThresholdsDoc = self.read_input_json(out, THRESHOLDS_JSON)?;
        let bytes = self.read_input(out, LABELED_CSV)?;
        let mut labeled = read_labeled_csv(bytes.as_slice(), &doc.thresholds)?;
        if let Some(window) = doc.window {
            let rolling = ParameterKind::ALL
                .iter()
                .map(|&p| {
                    let values: Vec<f64> = labeled.base.values(p).collect();
                    rolling_adaptive(
                        &values,
                        window,
                        doc.percentile,
                        doc.thresholds.pair(p).fixed,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            labeled.rolling_adaptive = Some(PerParameter::from_fn(|p| rolling[p.index()].clone()));
        }
        Ok((labeled, doc))
    }

    fn load_model(
        &self,
        out: &mut Outcome,
        kind: ModelKind,
        p: ParameterKind,
    ) -> Result<TrainedModel> {
        let rel = model_path(kind, p);
        let bytes = self.read_input(out, &rel)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::ModelFormat(format!("{rel}: not UTF-8")))?;
        let model = TrainedModel::from_json(&text)?;
        if model.kind() != kind || model.target() != p {
            return Err(Error::Contract(format!(
                "{rel} holds a {} model for {}",
                model.kind(),
                model.target()
            )));
        }
        Ok(model)
    }

    // ---- stages ----

    fn generate(&self, out: &mut Outcome) -> Result<()> {
        let series = if let Some(input) = &self.config.paths.input_csv {
            let bytes = fs::read(input).map_err(|e| Error::io(input, e))?;
            out.inputs
                .insert(input.display().to_string(), sha256_hex(&bytes));
            let bounds = self.config.glitch_bounds()?;
            let (series, report) = load_clean(bytes.as_slice(), &self.config.schema, &bounds)?;
            self.write_output_json(out, CLEANING_JSON, &report)?;
            out.summary = format!(
                "kept {} of {} rows from {} ({} missing, {} non-numeric, {} bad timestamp, {} glitch, {} duplicate)",
                report.rows_kept,
                report.rows_read,
                input.display(),
                report.rows_dropped_missing,
                report.rows_dropped_nonnumeric,
                report.rows_dropped_bad_timestamp,
                report.rows_dropped_glitch,
                report.duplicate_timestamps_removed
            );
            series
        } else {
            let gen = self.config.generator_config();
            out.seeds.insert("generate".into(), gen.master_seed);
            let series = generate(&gen)?;
            out.summary = format!("{} synthetic readings", series.len());
            series
        };
        self.write_output_with(out, BASELINE_CSV, |buf| write_csv(&series, buf))?;
        out.summary.push_str(&format!(" -> {BASELINE_CSV}"));
        Ok(())
    }

    fn inject(&self, out: &mut Outcome) -> Result<()> {
        let bytes = self.read_input(out, BASELINE_CSV)?;
        let (series, _) = parse_csv(bytes.as_slice(), &CsvSchema::default())?;
        let spec = self.config.injection_spec();
        out.seeds.insert("inject".into(), spec.seed);
        let (injected, log) = inject(&series, &spec, &self.config.fixed_thresholds)?;
        self.write_output_with(out, INJECTED_CSV, |buf| write_csv(&injected, buf))?;
        self.write_output_json(out, INJECTIONS_JSON, &log)?;
        out.summary = format!(
            "{} critical values injected into {} readings -> {INJECTED_CSV}",
            log.len(),
            injected.len()
        );
        Ok(())
    }

    fn label(&self, out: &mut Outcome) -> Result<()> {
        let bytes = self.read_input(out, INJECTED_CSV)?;
        let (series, _) = parse_csv(bytes.as_slice(), &CsvSchema::default())?;
        let log: InjectionLog = self.read_input_json(out, INJECTIONS_JSON)?;
        let series = apply_log(series, &log)?;
        let settings = self.config.labeling;
        let thresholds =
            compute_thresholds_at(&series, &self.config.fixed_thresholds, settings.percentile)?;
        let (labeled, summary) = match settings.window {
            Some(w) => label_series_rolling(&series, &thresholds, w, settings.percentile)?,
            None => label_series(&series, &thresholds),
        };
        let doc = ThresholdsDoc {
            percentile: settings.percentile,
            window: settings.window,
            thresholds: thresholds.clone(),
        };
        self.write_output_json(out, THRESHOLDS_JSON, &doc)?;
        self.write_output_with(out, LABELED_CSV, |buf| write_labeled_csv(&labeled, buf))?;
        self.write_output_with(out, ALERT_COUNTS_CSV, |buf| {
            summary.write_csv(&thresholds, buf)
        })?;
        let counts: Vec<String> = ParameterKind::ALL
            .iter()
            .map(|&p| {
                let c = summary.counts[p];
                format!("{p} {}/{}", c.fixed_alert_count, c.adaptive_alert_count)
            })
            .collect();
        out.summary = format!(
            "{} readings labeled; fixed/adaptive alerts: {}",
            labeled.len(),
            counts.join(", ")
        );
        if !thresholds.clamped.is_empty() {
            let names: Vec<&str> = thresholds.clamped.iter().map(|p| p.name()).collect();
            out.summary.push_str(&format!(
                "; adaptive clamped to fixed for {}",
                names.join(", ")
            ));
        }
        Ok(())
    }

    fn train(&self, out: &mut Outcome) -> Result<()> {
        let (labeled, _) = self.load_labeled(out)?;
        let cfg = &self.config;
        let mut splits = BTreeMap::new();
        let mut train_sets = BTreeMap::new();
        for p in ParameterKind::ALL {
            let data = Dataset::from_labeled(&labeled, p, cfg.models.layout_for(p))?;
            let seed = cfg.split_seed(p);
            out.seeds.insert(format!("split/{p}"), seed);
            let split = stratified_split_indices(data.targets(), cfg.split.test_fraction, seed)?;
            train_sets.insert(p, data.subset(&split.train));
            splits.insert(p, split);
        }
        self.write_output_json(out, SPLIT_JSON, &splits)?;

        let jobs: Vec<(ModelKind, ParameterKind)> = ModelKind::ALL
            .iter()
            .flat_map(|&k| ParameterKind::ALL.map(|p| (k, p)))
            .collect();
        for &(k, p) in &jobs {
            out.seeds
                .insert(format!("train/{k}/{p}"), cfg.train_seed(k, p));
        }
        // Each job has its own seed, so the results do not depend on scheduling.
        let trained: Vec<Result<String>> = jobs
            .par_iter()
            .map(|&(k, p)| {
                TrainedModel::train(k, &train_sets[&p], &cfg.models, cfg.train_seed(k, p))?
                    .to_json()
            })
            .collect();
        for (&(k, p), json) in jobs.iter().zip(trained) {
            self.write_output(out, &model_path(k, p), json?.as_bytes())?;
        }
        let test_rows: usize = splits.values().map(|s: &Split| s.test.len()).sum();
        out.summary = format!(
            "{} models trained; {} of {} rows held out per parameter",
            jobs.len(),
            test_rows / ParameterKind::COUNT,
            labeled.len()
        );
        Ok(())
    }

    fn evaluate(&self, out: &mut Outcome) -> Result<()> {
        let (labeled, _) = self.load_labeled(out)?;
        let splits: BTreeMap<ParameterKind, Split> = self.read_input_json(out, SPLIT_JSON)?;
        let dataset = self.config.dataset_name();
        let mut report = EvaluationReport::default();
        for kind in ModelKind::ALL {
            for p in ParameterKind::ALL {
                let model = self.load_model(out, kind, p)?;
                let split = splits
                    .get(&p)
                    .ok_or_else(|| Error::Contract(format!("{SPLIT_JSON} has no split for {p}")))?;
                let data = Dataset::from_labeled(&labeled, p, model.layout())?;
                if let Some(&bad) = split.test.iter().find(|&&i| i >= data.len()) {
                    return Err(Error::Contract(format!(
                        "{SPLIT_JSON} refers to row {bad} of {}",
                        data.len()
                    )));
                }
                let test = data.subset(&split.test);
                let predicted: Vec<HealthLabel> = test.rows().map(|x| model.predict(x)).collect();
                let cm = confusion(test.targets(), &predicted)?;
                report
                    .entries
                    .push(ReportEntry::new(kind, dataset.clone(), p, cm));
            }
        }
        self.write_output_with(out, REPORT_CSV, |buf| report.write_csv(buf))?;
        self.write_output_with(out, SUMMARY_CSV, |buf| report.write_summary_csv(buf))?;
        self.write_output(out, SUMMARY_TXT, report.summary_text().as_bytes())?;
        for kind in ModelKind::ALL {
            self.write_output_with(out, &confusion_path(kind, "csv"), |buf| {
                report.write_confusion_csv(kind, buf)
            })?;
            self.write_output(
                out,
                &confusion_path(kind, "svg"),
                confusion_svg(&report, kind).as_bytes(),
            )?;
        }
        let f1: Vec<String> = ModelKind::ALL
            .iter()
            .map(|&k| {
                let min = report
                    .entries
                    .iter()
                    .filter(|e| e.approach == k)
                    .map(|e| e.metrics.macro_avg.f1)
                    .fold(f64::INFINITY, f64::min);
                format!("{k} {min:.4}")
            })
            .collect();
        out.summary = format!(
            "{} models evaluated; lowest macro-F1: {} -> {REPORT_CSV}",
            report.entries.len(),
            f1.join(", ")
        );
        Ok(())
    }

    fn simulate(&self, out: &mut Outcome) -> Result<()> {
        let (labeled, doc) = self.load_labeled(out)?;
        let mut bank = ModelBank::new();
        for kind in ModelKind::ALL {
            for p in ParameterKind::ALL {
                bank.insert(self.load_model(out, kind, p)?)?;
            }
        }
        let rel = EVENTS_JSONL;
        let path = self.path(rel);
        create_parent(&path)?;
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut sink = HashingWriter::new(BufWriter::new(file));
        let mut critical = 0usize;
        let n = replay(
            &labeled.base,
            &doc.thresholds,
            &bank,
            self.config.simulate.pacing(),
            &mut SystemClock,
            |e: AlertEvent| {
                if e.threshold_label == HealthLabel::CriticalAlert {
                    critical += 1;
                }
                let line = serde_json::to_string(&e).map_err(|source| Error::Json {
                    path: path.clone(),
                    source,
                })?;
                writeln!(sink, "{line}").map_err(|e| Error::io(&path, e))
            },
        )?;
        let digest = sink.finish().map_err(|e| Error::io(&path, e))?;
        out.outputs.insert(rel.to_owned(), digest);
        out.summary = format!(
            "{n} events from {} readings ({critical} threshold critical) -> {rel}",
            labeled.len()
        );
        Ok(())
    }

    fn plot(&self, out: &mut Outcome) -> Result<()> {
        let (labeled, _) = self.load_labeled(out)?;
        let log: InjectionLog = self.read_input_json(out, INJECTIONS_JSON)?;
        for p in ParameterKind::ALL {
            self.write_output(out, &plot_path(p), signal_svg(&labeled, p, &log).as_bytes())?;
        }
        out.summary = format!("{} charts -> plots/", ParameterKind::COUNT);
        Ok(())
    }
}

/// Writer that keeps a running SHA-256 of everything written through it.
struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    fn new(inner: W) -> Self {
        HashingWriter {
            inner,
            hasher: Sha256::new(),
        }
    }

    fn finish(mut self) -> std::io::Result<String> {
        self.inner.flush()?;
        Ok(format!("{:x}", self.hasher.finalize()))
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serialises");
    bytes.push(b'\n');
    bytes
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &to_json_bytes(value))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("deploy".parse::<Stage>().is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hashing_writer_matches_digest() {
        let mut w = HashingWriter::new(Vec::new());
        w.write_all(b"ab").unwrap();
        w.write_all(b"c").unwrap();
        assert_eq!(w.finish().unwrap(), sha256_hex(b"abc"));
    }
}
