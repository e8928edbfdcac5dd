//! Replay with trained models on an injected synthetic series.

use std::time::Duration;

use pumpguard::models::{
    BoostConfig, Dataset, FeatureLayout, ForestConfig, ModelConfig, ModelKind, SvmConfig,
    TrainedModel,
};
use pumpguard::stream::{
    replay, replay_collect, write_jsonl, AlertEvent, Clock, EventSource, ModelBank, Pacing,
};
use pumpguard::synth::{generate, inject, GeneratorConfig, InjectionLog, InjectionSpec};
use pumpguard::thresholds::{compute_thresholds, label_series, LabeledSeries, DEFAULT_FIXED};
use pumpguard::{HealthLabel, ParameterKind, SensorSeries};

struct RecordingClock(Vec<Duration>);

impl Clock for RecordingClock {
    fn sleep(&mut self, d: Duration) {
        self.0.push(d);
    }
}

fn fixture() -> (SensorSeries, InjectionLog, LabeledSeries) {
    let gen = GeneratorConfig {
        sample_count: 800,
        ..GeneratorConfig::default()
    };
    let base = generate(&gen).unwrap();
    let spec = InjectionSpec {
        count_per_parameter: 4,
        ..InjectionSpec::default()
    };
    let (series, log) = inject(&base, &spec, &DEFAULT_FIXED).unwrap();
    let thresholds = compute_thresholds(&series, &DEFAULT_FIXED).unwrap();
    let (labeled, _) = label_series(&series, &thresholds);
    (series, log, labeled)
}

fn bank(labeled: &LabeledSeries) -> ModelBank {
    let cfg = ModelConfig {
        forest: ForestConfig {
            n_trees: 10,
            ..ForestConfig::default()
        },
        gbt: BoostConfig {
            rounds: 10,
            ..BoostConfig::default()
        },
        svm: SvmConfig { c: 1.0, epochs: 10 },
        univariate: false,
    };
    let mut bank = ModelBank::new();
    for p in ParameterKind::ALL {
        let data = Dataset::from_labeled(labeled, p, cfg.layout_for(p)).unwrap();
        for kind in ModelKind::ALL {
            bank.insert(TrainedModel::train(kind, &data, &cfg, 5).unwrap())
                .unwrap();
        }
    }
    bank
}

#[test]
fn paced_and_instant_replays_agree() {
    let (series, _, labeled) = fixture();
    let models = bank(&labeled);
    let instant = replay_collect(&series, &labeled.thresholds_used, &models).unwrap();
    assert!(!instant.is_empty());

    let mut clock = RecordingClock(Vec::new());
    let mut paced = Vec::new();
    let n = replay(
        &series,
        &labeled.thresholds_used,
        &models,
        Pacing::Speed(10.0),
        &mut clock,
        |e| {
            paced.push(e);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(n, paced.len());
    assert_eq!(paced, instant);
    assert_eq!(clock.0.len(), series.len() - 1);
    assert!(clock.0.iter().all(|&d| d == Duration::from_secs(6)));
}

#[test]
fn events_follow_the_emission_rule() {
    let (series, _, labeled) = fixture();
    let models = bank(&labeled);
    let events = replay_collect(&series, &labeled.thresholds_used, &models).unwrap();
    assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    for e in &events {
        assert_eq!(e.model_labels.len(), 3);
        let model_fired = e.model_labels.values().any(|&l| l != HealthLabel::Normal);
        assert!(e.threshold_label != HealthLabel::Normal || model_fired);
        let want = if e.threshold_label != HealthLabel::Normal {
            EventSource::Threshold
        } else {
            EventSource::Model
        };
        assert_eq!(e.source, want);
    }
    // Every threshold-channel alert in the labels shows up as an event.
    let threshold_events = events
        .iter()
        .filter(|e| e.source == EventSource::Threshold)
        .count();
    let labeled_alerts = labeled
        .labels
        .iter()
        .flat_map(|l| l.to_array())
        .filter(|&l| l != HealthLabel::Normal)
        .count();
    assert_eq!(threshold_events, labeled_alerts);
}

#[test]
fn every_injection_fires_the_threshold_channel() {
    let (series, log, labeled) = fixture();
    let events = replay_collect(&series, &labeled.thresholds_used, &ModelBank::new()).unwrap();
    for rec in &log {
        let ts = series.readings()[rec.index].timestamp;
        assert!(
            events.iter().any(|e| e.timestamp == ts
                && e.parameter == rec.parameter
                && e.threshold_label == HealthLabel::CriticalAlert),
            "missing critical event for {:?}",
            rec
        );
    }
}

#[test]
fn mismatched_model_is_rejected_before_replay() {
    let (_, _, labeled) = fixture();
    let data = Dataset::from_labeled(
        &labeled,
        ParameterKind::Flow,
        FeatureLayout::Univariate(ParameterKind::Flow),
    )
    .unwrap();
    let cfg = ModelConfig {
        forest: ForestConfig {
            n_trees: 3,
            ..ForestConfig::default()
        },
        ..ModelConfig::default()
    };
    let TrainedModel::Forest(mut model) =
        TrainedModel::train(ModelKind::Forest, &data, &cfg, 1).unwrap()
    else {
        unreachable!()
    };
    // Claims to read pressure while predicting flow.
    model.layout = FeatureLayout::Univariate(ParameterKind::Pressure);
    let mut bank = ModelBank::new();
    assert!(matches!(
        bank.insert(TrainedModel::Forest(model.clone())),
        Err(pumpguard::Error::Contract(_))
    ));

    // Claims five inputs while its trees were grown on one.
    model.layout = FeatureLayout::Multivariate;
    assert!(matches!(
        bank.insert(TrainedModel::Forest(model)),
        Err(pumpguard::Error::Contract(_))
    ));
    assert!(bank.is_empty());
}

#[test]
fn jsonl_round_trips() {
    let (series, _, labeled) = fixture();
    let models = bank(&labeled);
    let events = replay_collect(&series, &labeled.thresholds_used, &models).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&events, &mut buf).unwrap();
    let back: Vec<AlertEvent> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(back, events);
}

#[test]
fn sink_errors_stop_the_replay() {
    let (series, _, labeled) = fixture();
    let mut seen = 0;
    let r = replay(
        &series,
        &labeled.thresholds_used,
        &ModelBank::new(),
        Pacing::Instant,
        &mut RecordingClock(Vec::new()),
        |_| {
            seen += 1;
            if seen == 3 {
                Err(pumpguard::Error::Domain("consumer closed".into()))
            } else {
                Ok(())
            }
        },
    );
    assert!(r.is_err());
    assert_eq!(seen, 3);
}
