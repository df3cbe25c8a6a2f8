//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use mlal_core::corpus::{ClassificationText, DepTree, TaggedSentence};
use mlal_core::features::FeatureSpace;
use mlal_core::{Instance, InstanceId, LanguageTag, Payload, TaskKind};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn lang(s: &str) -> LanguageTag {
    LanguageTag::new(s).unwrap()
}

pub fn small_space() -> FeatureSpace {
    FeatureSpace {
        hash_dimension: 1024,
        ngram_min: 2,
        ngram_max: 3,
    }
}

const WORDS: &[&str] = &["kato", "mire", "sul", "ba", "tenoka", "ri", "pel", "drum", "osa", "vik"];
const TAGS: &[&str] = &["O", "B-PER", "I-PER", "B-LOC"];
const DEPRELS: &[&str] = &["nsubj", "obj", "root"];
const UPOS: &[&str] = &["NOUN", "VERB", "DET"];

pub fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| WORDS.choose(rng).unwrap().to_string()).collect()
}

/// Uniformly shuffled attachment order gives a random single-root tree.
pub fn random_heads(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for (k, &d) in order.iter().enumerate().skip(1) {
        heads[d - 1] = order[rng.gen_range(0..k)];
    }
    heads
}

pub fn random_instance(rng: &mut ChaCha8Rng, task: TaskKind, id: u64, max_len: usize) -> Instance {
    let n = rng.gen_range(1..=max_len);
    let tokens = words(rng, n);
    let payload = match task {
        TaskKind::Classification => Payload::Classification(ClassificationText {
            text: tokens.join(" "),
            label: Some(["pos", "neg", "neu"][rng.gen_range(0..3)].to_string()),
        }),
        TaskKind::SequenceTagging => Payload::Tagged(TaggedSentence {
            tags: Some((0..n).map(|_| TAGS.choose(rng).unwrap().to_string()).collect()),
            tokens,
        }),
        TaskKind::DependencyParsing => Payload::Tree(DepTree {
            upos: (0..n).map(|_| UPOS.choose(rng).unwrap().to_string()).collect(),
            heads: Some(random_heads(rng, n)),
            labels: Some((0..n).map(|_| DEPRELS.choose(rng).unwrap().to_string()).collect()),
            tokens,
        }),
    };
    Instance::new(InstanceId(id), lang("en"), payload)
}

/// True when `heads` (1-based dependents, head 0 = root) is a single-root
/// arborescence, checked by walking every node up to the root.
pub fn is_single_root_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|&&h| h == 0).count() != 1 {
        return false;
    }
    for (i, &h) in heads.iter().enumerate() {
        if h > n || h == i + 1 {
            return false;
        }
    }
    for start in 1..=n {
        let mut node = start;
        for _ in 0..=n {
            if node == 0 {
                break;
            }
            node = heads[node - 1];
        }
        if node != 0 {
            return false;
        }
    }
    true
}

/// Every single-root arborescence over `n` tokens, by filtering all head
/// assignments.
pub fn all_trees(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let total = (n + 1).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let heads: Vec<usize> = (0..n)
            .map(|_| {
                let h = c % (n + 1);
                c /= n + 1;
                h
            })
            .collect();
        if is_single_root_tree(&heads) {
            out.push(heads);
        }
    }
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax computed directly from the definition.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let z: f64 = xs.iter().map(|x| x.exp()).sum();
    xs.iter().map(|x| x.exp() / z).collect()
}
