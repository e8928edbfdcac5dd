//! Classifiers checked against independently written reference computations.

use proptest::prelude::*;
use rand::Rng;

use pumpguard::models::gbt::RegNode;
use pumpguard::models::svm::{ovr_objective, Standardizer};
use pumpguard::models::{
    train_forest, train_gbt, train_svm, train_tree, BoostConfig, Dataset, FeatureLayout,
    ForestConfig, ModelConfig, ModelKind, SvmConfig, TrainedModel, TreeNode, TreeParams,
};
use pumpguard::rng::rng_from_seed;
use pumpguard::{HealthLabel, ParameterKind};

/// Five noisy features; the label depends on the first two.
fn random_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let score = row[0] + 0.5 * row[1] + rng.gen_range(-0.5..0.5);
        ys.push(if score > 2.0 {
            HealthLabel::CriticalAlert
        } else if score > 0.5 {
            HealthLabel::EarlyWarning
        } else {
            HealthLabel::Normal
        });
        rows.push(row);
    }
    Dataset::new(
        rows,
        ys,
        ParameterKind::Temperature,
        FeatureLayout::Multivariate,
    )
    .unwrap()
}

fn gini(c: &[usize; 3]) -> f64 {
    let n: usize = c.iter().sum();
    if n == 0 {
        return 0.0;
    }
    1.0 - c
        .iter()
        .map(|&k| (k as f64 / n as f64).powi(2))
        .sum::<f64>()
}

fn weighted_children(l: &[usize; 3], r: &[usize; 3]) -> f64 {
    let nl: usize = l.iter().sum();
    let nr: usize = r.iter().sum();
    (nl as f64 * gini(l) + nr as f64 * gini(r)) / (nl + nr) as f64
}

/// Lowest weighted child impurity over every feature and every cut between
/// distinct values.
fn best_stump(data: &Dataset) -> f64 {
    let mut best = f64::INFINITY;
    for f in 0..data.n_features() {
        let mut cuts: Vec<f64> = data.rows().map(|r| r[f]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in cuts.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (mut l, mut r) = ([0; 3], [0; 3]);
            for (x, y) in data.rows().zip(data.targets()) {
                if x[f] <= thr {
                    l[y.index()] += 1;
                } else {
                    r[y.index()] += 1;
                }
            }
            best = best.min(weighted_children(&l, &r));
        }
    }
    best
}

#[test]
fn root_split_is_the_best_stump() {
    for seed in 0..10 {
        let data = random_dataset(120, seed);
        let params = TreeParams {
            max_depth: 1,
            min_leaf_samples: 1,
            features_per_split: 5,
        };
        let tree = train_tree(&data, params, &mut rng_from_seed(seed)).unwrap();
        let leaves: Vec<[usize; 3]> = tree.leaves().copied().collect();
        assert_eq!(leaves.len(), 2, "seed {seed}");
        let got = weighted_children(&leaves[0], &leaves[1]);
        assert!((got - best_stump(&data)).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn forest_is_the_mode_of_its_trees() {
    let data = random_dataset(300, 5);
    let cfg = ForestConfig {
        n_trees: 25,
        ..ForestConfig::default()
    };
    let forest = train_forest(&data, &cfg, 11).unwrap();
    let probe = random_dataset(500, 6);
    for x in probe.rows() {
        let mut tally = [0usize; 3];
        for t in &forest.trees {
            tally[t.predict(x).index()] += 1;
        }
        // Highest count, scanning from the most severe so ties end on the lowest.
        let mut best = 2;
        for c in (0..2).rev() {
            if tally[c] >= tally[best] {
                best = c;
            }
        }
        assert_eq!(forest.predict(x), HealthLabel::from_index(best).unwrap());
    }
}

#[test]
fn bootstrap_leaves_sum_to_sample_size() {
    let data = random_dataset(200, 8);
    let forest = train_forest(
        &data,
        &ForestConfig {
            n_trees: 5,
            ..ForestConfig::default()
        },
        3,
    )
    .unwrap();
    for t in &forest.trees {
        let total: usize = t.leaves().map(|c| c.iter().sum::<usize>()).sum();
        assert_eq!(total, data.len());
        assert!(t.depth() <= forest.config.tree.max_depth);
        for n in &t.nodes {
            if let TreeNode::Leaf { class_counts } = n {
                assert!(class_counts.iter().sum::<usize>() >= forest.config.tree.min_leaf_samples);
            }
        }
    }
}

fn softmax_ref(s: &[f64; 3]) -> [f64; 3] {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = s.map(|v| (v - m).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

fn loss_ref(s: &[f64; 3], y: usize) -> f64 {
    -softmax_ref(s)[y].ln()
}

fn leaf_index(nodes: &[RegNode], x: &[f64]) -> usize {
    let mut i = 0;
    while let RegNode::Split {
        feature,
        threshold,
        left,
        right,
    } = &nodes[i]
    {
        i = if x[*feature] <= *threshold {
            *left
        } else {
            *right
        };
    }
    i
}

#[test]
fn boosting_rounds_match_hand_computation() {
    use HealthLabel::*;
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let ys = [
        Normal,
        Normal,
        Normal,
        EarlyWarning,
        Normal,
        EarlyWarning,
        CriticalAlert,
        CriticalAlert,
    ];
    let data = Dataset::new(
        xs.iter().map(|&x| vec![x]).collect(),
        ys.to_vec(),
        ParameterKind::Pressure,
        FeatureLayout::Univariate(ParameterKind::Pressure),
    )
    .unwrap();
    let cfg = BoostConfig {
        rounds: 2,
        learning_rate: 0.5,
        lambda: 1.0,
        gamma: 0.0,
        max_depth: 2,
    };
    let model = train_gbt(&data, &cfg).unwrap();

    // Smoothed priors: Normal 4, EarlyWarning 2, CriticalAlert 2 of 8.
    let base = [
        (5.0f64 / 11.0).ln(),
        (3.0f64 / 11.0).ln(),
        (3.0f64 / 11.0).ln(),
    ];
    for c in 0..3 {
        assert!((model.base_score[c] - base[c]).abs() < 1e-15);
    }

    let mut scores = vec![base; xs.len()];
    let mut penalty = 0.0;
    let mut expected_history = vec![scores
        .iter()
        .zip(&ys)
        .map(|(s, y)| loss_ref(s, y.index()))
        .sum::<f64>()];
    for trees in &model.rounds {
        for (c, tree) in trees.iter().enumerate() {
            // Every leaf holds −η·G/(H+λ) over the rows that reach it.
            let mut sums = std::collections::BTreeMap::<usize, (f64, f64)>::new();
            for (i, &x) in xs.iter().enumerate() {
                let p = softmax_ref(&scores[i]);
                let g = p[c] - if ys[i].index() == c { 1.0 } else { 0.0 };
                let h = p[c] * (1.0 - p[c]);
                let e = sums.entry(leaf_index(&tree.nodes, &[x])).or_default();
                e.0 += g;
                e.1 += h;
            }
            for (&leaf, &(g, h)) in &sums {
                let RegNode::Leaf { value } = tree.nodes[leaf] else {
                    unreachable!()
                };
                let want = -cfg.learning_rate * g / (h + cfg.lambda);
                assert!(
                    (value - want).abs() < 1e-12,
                    "leaf {leaf}: {value} vs {want}"
                );
                penalty += 0.5 * cfg.lambda * value * value;
            }
        }
        for (i, &x) in xs.iter().enumerate() {
            for (c, tree) in trees.iter().enumerate() {
                let RegNode::Leaf { value } = tree.nodes[leaf_index(&tree.nodes, &[x])] else {
                    unreachable!()
                };
                scores[i][c] += value;
            }
        }
        let loss: f64 = scores
            .iter()
            .zip(&ys)
            .map(|(s, y)| loss_ref(s, y.index()))
            .sum();
        expected_history.push(loss + penalty);
    }
    assert_eq!(model.objective_history.len(), 3);
    for (got, want) in model.objective_history.iter().zip(&expected_history) {
        assert!((got - want).abs() < 1e-10 * want.abs(), "{got} vs {want}");
    }
    for (i, &x) in xs.iter().enumerate() {
        let s = model.class_scores(&[x]);
        for c in 0..3 {
            assert!((s[c] - scores[i][c]).abs() < 1e-12);
        }
    }
}

#[test]
fn svm_is_invariant_to_affine_feature_rescaling() {
    let data = random_dataset(200, 21);
    let scale = [2.0, 0.01, 300.0, 1.0, 7.5];
    let shift = [-4.0, 1000.0, 0.5, 0.0, -60.0];
    let moved = Dataset::new(
        data.rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| v * scale[j] + shift[j])
                    .collect()
            })
            .collect(),
        data.targets().to_vec(),
        data.target_parameter(),
        data.layout(),
    )
    .unwrap();
    let cfg = SvmConfig { c: 1.0, epochs: 30 };
    let a = train_svm(&data, &cfg, 4).unwrap();
    let b = train_svm(&moved, &cfg, 4).unwrap();
    for (x, y) in data.rows().zip(moved.rows()) {
        let (da, db) = (a.decision_values(x), b.decision_values(y));
        for c in 0..3 {
            assert!((da[c] - db[c]).abs() < 1e-6, "{da:?} vs {db:?}");
        }
    }
}

#[test]
fn svm_history_is_the_recomputed_objective() {
    let data = random_dataset(150, 2);
    let cfg = SvmConfig { c: 0.5, epochs: 20 };
    let m = train_svm(&data, &cfg, 9).unwrap();
    let st = Standardizer::fit(&data);
    let rows: Vec<Vec<f64>> = data.rows().map(|r| st.transform(r)).collect();
    for label in HealthLabel::ALL {
        let c = label.index();
        let signs: Vec<f64> = data
            .targets()
            .iter()
            .map(|&t| if t == label { 1.0 } else { -1.0 })
            .collect();
        let hist = &m.objective_history[c];
        assert_eq!(hist.len(), cfg.epochs + 1);
        // The starting point is w = 0, b = 0: every hinge term is exactly 1.
        assert!((hist[0] - cfg.c * data.len() as f64).abs() < 1e-9);
        let last = ovr_objective(&m.weights[c], m.biases[c], cfg.c, &rows, &signs);
        assert!((hist[cfg.epochs] - last).abs() < 1e-9 * last.max(1.0));
        assert!(last < hist[0]);
    }
}

#[test]
fn training_is_reproducible() {
    let data = random_dataset(150, 12);
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
    for kind in ModelKind::ALL {
        let a = TrainedModel::train(kind, &data, &cfg, 77)
            .unwrap()
            .to_json()
            .unwrap();
        let b = TrainedModel::train(kind, &data, &cfg, 77)
            .unwrap()
            .to_json()
            .unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn model_json_round_trips(seed in any::<u64>(), n in 12usize..60, kind_ix in 0usize..3) {
        let data = random_dataset(n, seed);
        prop_assume!(data.class_counts().iter().filter(|&&c| c > 0).count() >= 2);
        let cfg = ModelConfig {
            forest: ForestConfig { n_trees: 4, ..ForestConfig::default() },
            gbt: BoostConfig { rounds: 4, ..BoostConfig::default() },
            svm: SvmConfig { c: 1.0, epochs: 4 },
            univariate: false,
        };
        let model = TrainedModel::train(ModelKind::ALL[kind_ix], &data, &cfg, seed).unwrap();
        let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        let probe = random_dataset(40, seed ^ 1);
        for x in probe.rows() {
            prop_assert_eq!(back.predict(x), model.predict(x));
        }
    }
}
