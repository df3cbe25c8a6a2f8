mod common;

use common::{all_trees, lang, random_instance, small_space, softmax};
use mlal_core::corpus::{ClassificationText, DepTree, TaggedSentence};
use mlal_core::models::{train, train_traced, TaskModel, TrainingConfig};
use mlal_core::par::Execution;
use mlal_core::tasks::MetricCounts;
use mlal_core::{Instance, InstanceId, Payload, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn text(id: u64, t: &str, label: &str) -> Instance {
    Instance::new(
        InstanceId(id),
        lang("en"),
        Payload::Classification(ClassificationText {
            text: t.into(),
            label: Some(label.into()),
        }),
    )
}

/// Two classes with disjoint vocabularies.
fn separable() -> Vec<Instance> {
    let pos = ["sunny bright", "bright warm day", "warm sunny", "glad bright warm"];
    let neg = ["gloomy cold", "cold rainy night", "rainy gloomy", "sad cold rainy"];
    let mut out = Vec::new();
    for (i, (p, n)) in pos.iter().zip(neg).enumerate() {
        out.push(text(2 * i as u64, p, "pos"));
        out.push(text(2 * i as u64 + 1, n, "neg"));
    }
    out
}

fn quick() -> TrainingConfig {
    TrainingConfig {
        max_epochs: 30,
        patience: 10,
        batch_size: 4,
        ..Default::default()
    }
}

#[test]
fn separable_set_is_fit_exactly() {
    let data = separable();
    let refs: Vec<&Instance> = data.iter().collect();
    let outputs = TaskModel::label_inventory(TaskKind::Classification, &data);
    let init = TaskModel::new(TaskKind::Classification, small_space(), outputs).unwrap();
    let out = train(&init, &refs, &refs, &quick()).unwrap();
    let counts = out.model.evaluate(&refs, Execution::Sequential).unwrap();
    assert_eq!(
        counts,
        MetricCounts::Accuracy {
            correct: data.len() as u64,
            total: data.len() as u64
        }
    );
}

#[test]
fn training_is_bit_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for task in [TaskKind::Classification, TaskKind::SequenceTagging, TaskKind::DependencyParsing] {
        let data: Vec<Instance> = (0..12).map(|i| random_instance(&mut rng, task, i, 5)).collect();
        let refs: Vec<&Instance> = data.iter().collect();
        let init = TaskModel::new(task, small_space(), TaskModel::label_inventory(task, &data)).unwrap();
        let config = TrainingConfig {
            rng_seed: 99,
            ..quick()
        };
        let a = train(&init, &refs[..8], &refs[8..], &config).unwrap();
        let b = train(&init, &refs[..8], &refs[8..], &config).unwrap();
        let bits = |m: &TaskModel| m.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model), "{task}");
    }
}

#[test]
fn full_batch_small_steps_increase_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for task in [TaskKind::Classification, TaskKind::SequenceTagging, TaskKind::DependencyParsing] {
        let data: Vec<Instance> = (0..10).map(|i| random_instance(&mut rng, task, i, 4)).collect();
        let refs: Vec<&Instance> = data.iter().collect();
        let init = TaskModel::new(task, small_space(), TaskModel::label_inventory(task, &data)).unwrap();
        let config = TrainingConfig {
            learning_rates: vec![1e-3],
            batch_size: data.len(),
            max_epochs: 20,
            patience: 20,
            l2: 1e-4,
            rng_seed: 0,
        };
        let out = train_traced(&init, &refs, &refs, &config).unwrap();
        let obj: Vec<f64> = out.history.iter().map(|p| p.train_objective.unwrap()).collect();
        assert_eq!(obj.len(), 20);
        for w in obj.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{task}: {obj:?}");
        }
        assert!(obj[19] > obj[0], "{task}");
    }
}

/// Weights drawn at random; classes or tags laid out as consecutive rows of
/// `hash_dimension` weights, parser rows 0 (arcs) then 1.. (labels).
fn random_model(rng: &mut ChaCha8Rng, task: TaskKind, outputs: &[&str]) -> TaskModel {
    let outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
    let len = TaskModel::new(task, small_space(), outputs.clone()).unwrap().weights().len();
    let w = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TaskModel::with_weights(task, small_space(), outputs, w).unwrap()
}

fn row_dot(model: &TaskModel, row: usize, x: &[(u32, f64)]) -> f64 {
    let dim = model.feature_space().dim();
    x.iter().map(|&(i, v)| model.weights()[row * dim + i as usize] * v).sum()
}

#[test]
fn class_distribution_matches_hand_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = random_model(&mut rng, TaskKind::Classification, &["neg", "neu", "pos"]);
    let inst = text(0, "kato mire sul", "pos");
    let x = model.feature_space().text_features("kato mire sul");
    let want = softmax(&[row_dot(&model, 0, &x), row_dot(&model, 1, &x), row_dot(&model, 2, &x)]);
    let got = model.predict_class_proba(&inst).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
    assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn tag_distributions_match_hand_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = random_model(&mut rng, TaskKind::SequenceTagging, &["B-PER", "I-PER", "O"]);
    let tokens: Vec<String> = ["Ana", "sees", "Bo"].iter().map(|s| s.to_string()).collect();
    let inst = Instance::new(
        InstanceId(0),
        lang("en"),
        Payload::Tagged(TaggedSentence {
            tokens: tokens.clone(),
            tags: None,
        }),
    );
    let got = model.predict_tag_probas(&inst).unwrap();
    for (i, dist) in got.iter().enumerate() {
        let x = model.feature_space().token_features(&tokens, i);
        let want = softmax(&(0..3).map(|k| row_dot(&model, k, &x)).collect::<Vec<_>>());
        for (g, w) in dist.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

fn tree_instance(tokens: &[&str], upos: &[&str]) -> Instance {
    Instance::new(
        InstanceId(0),
        lang("en"),
        Payload::Tree(DepTree {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            upos: upos.iter().map(|s| s.to_string()).collect(),
            heads: None,
            labels: None,
        }),
    )
}

#[test]
fn head_distributions_match_hand_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = random_model(&mut rng, TaskKind::DependencyParsing, &["nsubj", "obj", "root"]);
    let tokens: Vec<String> = ["dogs", "chase", "cats"].iter().map(|s| s.to_string()).collect();
    let upos: Vec<String> = ["NOUN", "VERB", "NOUN"].iter().map(|s| s.to_string()).collect();
    let inst = tree_instance(&["dogs", "chase", "cats"], &["NOUN", "VERB", "NOUN"]);
    let probas = model.predict_arc_probas(&inst).unwrap();
    for d in 1..=3 {
        let heads: Vec<usize> = (0..=3).filter(|&h| h != d).collect();
        let scores: Vec<f64> = heads
            .iter()
            .map(|&h| row_dot(&model, 0, &model.feature_space().arc_features(&tokens, &upos, h, d)))
            .collect();
        let want = softmax(&scores);
        for (k, &h) in heads.iter().enumerate() {
            assert!((probas.head(d)[h] - want[k]).abs() < 1e-12, "d={d} h={h}");
        }
        assert_eq!(probas.head(d)[d], 0.0);
    }
}

#[test]
fn zero_weights_and_single_token_parses() {
    let model = TaskModel::new(TaskKind::DependencyParsing, small_space(), vec!["root".into(), "obj".into()]).unwrap();
    let model = TaskModel::with_weights(TaskKind::DependencyParsing, small_space(), model.outputs().to_vec(), model.weights().to_vec()).unwrap();
    let two = model.predict_arc_probas(&tree_instance(&["a", "b"], &["NOUN", "VERB"])).unwrap();
    for d in 1..=2 {
        let nonzero: Vec<f64> = two.head(d).iter().copied().filter(|&p| p > 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        assert!(nonzero.iter().all(|p| (p - 0.5).abs() < 1e-12));
    }
    let one = tree_instance(&["a"], &["NOUN"]);
    assert!((model.predict_arc_probas(&one).unwrap().head(1)[0] - 1.0).abs() < 1e-12);
    assert_eq!(model.parse(&one).unwrap().tree.heads, vec![0]);
}

#[test]
fn decoder_finds_the_most_probable_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let words = ["a", "bb", "ccc", "dd", "e"];
    let pos = ["NOUN", "VERB", "DET", "NOUN", "ADP"];
    for case in 0..40 {
        let model = random_model(&mut rng, TaskKind::DependencyParsing, &["nsubj", "obj", "root"]);
        let n = 1 + case % 5;
        let inst = tree_instance(&words[..n], &pos[..n]);
        let probas = model.predict_arc_probas(&inst).unwrap();
        let log_score = |heads: &[usize]| -> f64 { heads.iter().enumerate().map(|(i, &h)| probas.head(i + 1)[h].ln()).sum() };
        let best = all_trees(n).iter().map(|h| log_score(h)).fold(f64::NEG_INFINITY, f64::max);
        let parse = model.parse(&inst).unwrap();
        assert!((log_score(&parse.tree.heads) - best).abs() < 1e-9, "case {case}");
        let gold = common::random_heads(&mut rng, n);
        assert!(log_score(&parse.tree.heads) >= log_score(&gold) - 1e-12);
    }
}
