//! Synthetic multilingual corpora for all three tasks.
//!
//! Every language realises the same latent concepts (words with a sentiment
//! polarity, entity type or part of speech) through its own surface forms.
//! `overlap` is the probability that a concept uses a form shared by all
//! languages: at 1 every language has the same vocabulary, at 0 the
//! vocabularies are disjoint. Languages also differ in difficulty
//! (classification, tagging) and word order (parsing), so that budget spent
//! on one language transfers only partly to the others.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, ClassificationText, DepTree, Instance, InstanceId, LanguageTag, Payload, TaggedSentence};
use crate::experiment::{DataFiles, ExperimentData, ExperimentError};
use crate::tasks::TaskKind;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic corpus parameters: {0}")]
    Config(String),
    #[error("writing {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn default_test_size() -> usize {
    300
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub task: TaskKind,
    pub languages: usize,
    /// Probability in `[0, 1]` that a concept's surface form is shared.
    pub overlap: f64,
    /// Training instances per language.
    pub train_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(SynthError::Config(format!("overlap must be in [0, 1], got {}", self.overlap)));
        }
        if self.languages == 0 || self.languages > 26 * 26 {
            return Err(SynthError::Config(format!("languages must be in 1..=676, got {}", self.languages)));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(SynthError::Config("train_size and test_size must be positive".into()));
        }
        Ok(())
    }
}

/// Tags `la`, `lb`, … (two letters after `l` beyond 26 languages).
pub fn language_tags(k: usize) -> Vec<LanguageTag> {
    let letters: Vec<char> = ('a'..='z').collect();
    (0..k)
        .map(|i| {
            let code = if k <= 26 {
                format!("l{}", letters[i])
            } else {
                format!("l{}{}", letters[i / 26], letters[i % 26])
            };
            LanguageTag::new(code).expect("valid generated tag")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub task: TaskKind,
    pub train: BTreeMap<LanguageTag, Vec<Instance>>,
    pub test: BTreeMap<LanguageTag, Vec<Instance>>,
}

const CONSONANTS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "ch", "th", "kr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

/// Per-language surface forms for concepts `0..n`.
struct Lexicon {
    forms: Vec<Vec<String>>,
}

impl Lexicon {
    fn new(rng: &mut ChaCha8Rng, concepts: usize, languages: usize, overlap: f64) -> Self {
        let mut used = HashSet::new();
        let all_c: Vec<&str> = CONSONANTS.to_vec();
        let all_v: Vec<&str> = VOWELS.to_vec();
        let mut fresh = |rng: &mut ChaCha8Rng, cons: &[&str], vows: &[&str]| loop {
            let syllables = rng.gen_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| format!("{}{}", cons.choose(rng).unwrap(), vows.choose(rng).unwrap()))
                .collect();
            if used.insert(w.clone()) {
                return w;
            }
        };
        let shared: Vec<String> = (0..concepts).map(|_| fresh(rng, &all_c, &all_v)).collect();
        let mut forms = Vec::with_capacity(languages);
        for _ in 0..languages {
            // Each language draws from its own phoneme subset.
            let mut cons = all_c.clone();
            cons.shuffle(rng);
            cons.truncate(9);
            let mut vows = all_v.clone();
            vows.shuffle(rng);
            vows.truncate(4);
            let lang_forms = (0..concepts)
                .map(|c| {
                    if rng.gen::<f64>() < overlap {
                        shared[c].clone()
                    } else {
                        fresh(rng, &cons, &vows)
                    }
                })
                .collect();
            forms.push(lang_forms);
        }
        Lexicon { forms }
    }

    fn form(&self, lang: usize, concept: usize) -> String {
        self.forms[lang][concept].clone()
    }
}

/// Difficulty knob in `[0, 1]`: 0 for the first language, 1 for the last.
fn hardness(lang: usize, k: usize) -> f64 {
    if k <= 1 {
        0.0
    } else {
        lang as f64 / (k - 1) as f64
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let tags = language_tags(config.languages);
    let k = config.languages;
    let mut gen: Box<dyn Generator> = match config.task {
        TaskKind::Classification => Box::new(Sentiment::new(&mut rng, k, config.overlap)),
        TaskKind::SequenceTagging => Box::new(Entities::new(&mut rng, k, config.overlap)),
        TaskKind::DependencyParsing => Box::new(Grammar::new(&mut rng, k, config.overlap)),
    };
    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    let mut next = 0u64;
    for (j, tag) in tags.iter().enumerate() {
        let mut lang_rng = ChaCha8Rng::seed_from_u64(config.seed);
        lang_rng.set_stream(j as u64 + 1);
        let mut make = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Instance> {
            (0..n)
                .map(|_| {
                    let inst = Instance::new(InstanceId(next), tag.clone(), gen.sample(rng, j));
                    next += 1;
                    inst
                })
                .collect()
        };
        train.insert(tag.clone(), make(config.train_size, &mut lang_rng));
        test.insert(tag.clone(), make(config.test_size, &mut lang_rng));
    }
    Ok(SynthCorpus {
        task: config.task,
        train,
        test,
    })
}

impl SynthCorpus {
    /// Writes `<lang>.train.<ext>` and `<lang>.test.<ext>` into `dir` in the
    /// task's file format.
    pub fn write(&self, dir: &Path) -> Result<BTreeMap<LanguageTag, DataFiles>, SynthError> {
        let ext = match self.task {
            TaskKind::Classification => "tsv",
            TaskKind::SequenceTagging => "conll",
            TaskKind::DependencyParsing => "conllu",
        };
        std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let write_one = |path: &Path, insts: &[Instance]| -> Result<(), SynthError> {
            let io_err = |source| SynthError::Io {
                path: path.to_path_buf(),
                source,
            };
            let out = BufWriter::new(File::create(path).map_err(io_err)?);
            match self.task {
                TaskKind::Classification => corpus::write_tsv_classification(insts, out),
                TaskKind::SequenceTagging => corpus::write_conll_ner(insts, out),
                TaskKind::DependencyParsing => corpus::write_conllu(insts, out),
            }
            .map_err(io_err)
        };
        let mut files = BTreeMap::new();
        for (lang, insts) in &self.train {
            let f = DataFiles {
                train: dir.join(format!("{lang}.train.{ext}")),
                test: dir.join(format!("{lang}.test.{ext}")),
            };
            write_one(&f.train, insts)?;
            write_one(&f.test, &self.test[lang])?;
            files.insert(lang.clone(), f);
        }
        Ok(files)
    }

    pub fn into_data(self) -> Result<ExperimentData, ExperimentError> {
        ExperimentData::new(self.task, self.train, self.test, None)
    }
}

trait Generator {
    fn sample(&mut self, rng: &mut ChaCha8Rng, lang: usize) -> Payload;
}

/// Zipf(1) weights over `n` ranks, as natural vocabularies have.
fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("positive weights")
}

/// Documents whose label is the sign of their summed word polarity.
struct Sentiment {
    lexicon: Lexicon,
    k: usize,
    polar: WeightedIndex<f64>,
    neutral: WeightedIndex<f64>,
}

impl Sentiment {
    const CONCEPTS: usize = 400;
    /// Concepts `0..POLAR` are positive, `POLAR..2*POLAR` negative.
    const POLAR: usize = 40;

    fn new(rng: &mut ChaCha8Rng, k: usize, overlap: f64) -> Self {
        Sentiment {
            lexicon: Lexicon::new(rng, Self::CONCEPTS, k, overlap),
            k,
            polar: zipf(Self::POLAR),
            neutral: zipf(Self::CONCEPTS - 2 * Self::POLAR),
        }
    }

    fn polarity(c: usize) -> i32 {
        if c < Self::POLAR {
            1
        } else if c < 2 * Self::POLAR {
            -1
        } else {
            0
        }
    }

    fn polar_concept(&self, rng: &mut ChaCha8Rng) -> usize {
        let sign = if rng.gen_bool(0.5) { 0 } else { Self::POLAR };
        sign + self.polar.sample(rng)
    }
}

impl Generator for Sentiment {
    fn sample(&mut self, rng: &mut ChaCha8Rng, lang: usize) -> Payload {
        // Harder languages carry fewer polar words per document.
        let polar_rate = 0.3 - 0.15 * hardness(lang, self.k);
        let len = rng.gen_range(8..=20);
        let mut concepts: Vec<usize> = (0..len)
            .map(|_| {
                if rng.gen::<f64>() < polar_rate {
                    self.polar_concept(rng)
                } else {
                    2 * Self::POLAR + self.neutral.sample(rng)
                }
            })
            .collect();
        let mut sum: i32 = concepts.iter().map(|&c| Self::polarity(c)).sum();
        if sum == 0 {
            let c = self.polar_concept(rng);
            let pos = rng.gen_range(0..=concepts.len());
            concepts.insert(pos, c);
            sum = Self::polarity(c);
        }
        let text = concepts.iter().map(|&c| self.lexicon.form(lang, c)).collect::<Vec<_>>().join(" ");
        Payload::Classification(ClassificationText {
            text,
            label: Some(if sum > 0 { "pos" } else { "neg" }.to_string()),
        })
    }
}

/// Sentences of filler words with embedded typed entity mentions.
struct Entities {
    lexicon: Lexicon,
    k: usize,
}

impl Entities {
    const TYPES: [&'static str; 4] = ["PER", "LOC", "ORG", "MISC"];
    const PER_TYPE: usize = 80;
    const FILLER: usize = 400;

    fn new(rng: &mut ChaCha8Rng, k: usize, overlap: f64) -> Self {
        Entities {
            lexicon: Lexicon::new(rng, Self::TYPES.len() * Self::PER_TYPE + Self::FILLER, k, overlap),
            k,
        }
    }
}

impl Generator for Entities {
    fn sample(&mut self, rng: &mut ChaCha8Rng, lang: usize) -> Payload {
        let mention_rate = 0.22 - 0.1 * hardness(lang, self.k);
        let target = rng.gen_range(8..=20);
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        while tokens.len() < target {
            if rng.gen::<f64>() < mention_rate {
                let t = rng.gen_range(0..Self::TYPES.len());
                let len = match rng.gen::<f64>() {
                    x if x < 0.6 => 1,
                    x if x < 0.9 => 2,
                    _ => 3,
                };
                for i in 0..len {
                    let c = t * Self::PER_TYPE + rng.gen_range(0..Self::PER_TYPE);
                    tokens.push(self.lexicon.form(lang, c));
                    tags.push(format!("{}-{}", if i == 0 { "B" } else { "I" }, Self::TYPES[t]));
                }
            } else {
                let c = Self::TYPES.len() * Self::PER_TYPE + rng.gen_range(0..Self::FILLER);
                tokens.push(self.lexicon.form(lang, c));
                tags.push("O".to_string());
            }
        }
        Payload::Tagged(TaggedSentence { tokens, tags: Some(tags) })
    }
}

/// Word-order parameters of one language.
#[derive(Clone, Copy, Debug)]
struct Order {
    det_before: bool,
    adj_before: bool,
    verb_final: bool,
    prepositions: bool,
    adv_before: bool,
}

struct Node {
    upos: &'static str,
    form: String,
    deprel: &'static str,
    before: Vec<Node>,
    after: Vec<Node>,
}

/// A small dependency grammar: clauses with subject, object, oblique and
/// adverb; noun phrases with determiner, adjective and nested PPs.
struct Grammar {
    lexicon: Lexicon,
    orders: Vec<Order>,
}

impl Grammar {
    const POS: [(&'static str, usize); 6] = [("NOUN", 300), ("VERB", 120), ("ADJ", 80), ("ADV", 40), ("DET", 8), ("ADP", 12)];

    fn new(rng: &mut ChaCha8Rng, k: usize, overlap: f64) -> Self {
        let total = Self::POS.iter().map(|p| p.1).sum();
        let lexicon = Lexicon::new(rng, total, k, overlap);
        let orders = (0..k)
            .map(|j| {
                if j == 0 {
                    Order {
                        det_before: true,
                        adj_before: true,
                        verb_final: false,
                        prepositions: true,
                        adv_before: false,
                    }
                } else {
                    Order {
                        det_before: rng.gen_bool(0.8),
                        adj_before: rng.gen_bool(0.5),
                        verb_final: rng.gen_bool(0.5),
                        prepositions: rng.gen_bool(0.5),
                        adv_before: rng.gen_bool(0.5),
                    }
                }
            })
            .collect();
        Grammar { lexicon, orders }
    }

    fn leaf(&self, rng: &mut ChaCha8Rng, lang: usize, upos: &'static str, deprel: &'static str) -> Node {
        let mut offset = 0;
        let mut size = 0;
        for (p, n) in Self::POS {
            if p == upos {
                size = n;
                break;
            }
            offset += n;
        }
        Node {
            upos,
            form: self.lexicon.form(lang, offset + rng.gen_range(0..size)),
            deprel,
            before: Vec::new(),
            after: Vec::new(),
        }
    }

    fn attach(node: &mut Node, child: Node, before: bool) {
        if before {
            node.before.push(child);
        } else {
            node.after.push(child);
        }
    }

    fn noun_phrase(&self, rng: &mut ChaCha8Rng, lang: usize, deprel: &'static str, depth: usize) -> Node {
        let o = self.orders[lang];
        let mut n = self.leaf(rng, lang, "NOUN", deprel);
        if rng.gen_bool(0.4) {
            let adj = self.leaf(rng, lang, "ADJ", "amod");
            Self::attach(&mut n, adj, o.adj_before);
        }
        if rng.gen_bool(0.6) {
            let det = self.leaf(rng, lang, "DET", "det");
            if o.det_before {
                n.before.insert(0, det);
            } else {
                n.after.push(det);
            }
        }
        if depth < 2 && rng.gen_bool(0.15) {
            let pp = self.prep_phrase(rng, lang, "nmod", depth + 1);
            Self::attach(&mut n, pp, !o.prepositions);
        }
        n
    }

    fn prep_phrase(&self, rng: &mut ChaCha8Rng, lang: usize, deprel: &'static str, depth: usize) -> Node {
        let o = self.orders[lang];
        let mut n = self.noun_phrase(rng, lang, deprel, depth);
        let adp = self.leaf(rng, lang, "ADP", "case");
        if o.prepositions {
            n.before.insert(0, adp);
        } else {
            n.after.push(adp);
        }
        n
    }

    fn linearize(node: &Node, head: usize, out: &mut Vec<(String, &'static str, &'static str, usize)>, fix: &mut Vec<(usize, usize)>) -> usize {
        // Children are pushed before their head's position is known; record
        // (child index, placeholder) pairs and patch afterwards.
        let mut child_slots = Vec::new();
        for c in &node.before {
            child_slots.push(Self::linearize(c, usize::MAX, out, fix));
        }
        out.push((node.form.clone(), node.upos, node.deprel, head));
        let me = out.len();
        for c in &node.after {
            child_slots.push(Self::linearize(c, usize::MAX, out, fix));
        }
        for slot in child_slots {
            fix.push((slot, me));
        }
        me
    }
}

impl Generator for Grammar {
    fn sample(&mut self, rng: &mut ChaCha8Rng, lang: usize) -> Payload {
        let o = self.orders[lang];
        let mut root = self.leaf(rng, lang, "VERB", "root");
        if rng.gen_bool(0.9) {
            let subj = self.noun_phrase(rng, lang, "nsubj", 0);
            root.before.insert(0, subj);
        }
        if rng.gen_bool(0.6) {
            let obj = self.noun_phrase(rng, lang, "obj", 0);
            Self::attach(&mut root, obj, o.verb_final);
        }
        if rng.gen_bool(0.4) {
            let obl = self.prep_phrase(rng, lang, "obl", 1);
            Self::attach(&mut root, obl, o.verb_final);
        }
        if rng.gen_bool(0.3) {
            let adv = self.leaf(rng, lang, "ADV", "advmod");
            Self::attach(&mut root, adv, o.adv_before);
        }
        let mut out = Vec::new();
        let mut fix = Vec::new();
        Self::linearize(&root, 0, &mut out, &mut fix);
        for (child, head) in fix {
            out[child - 1].3 = head;
        }
        let tree = DepTree {
            tokens: out.iter().map(|t| t.0.clone()).collect(),
            upos: out.iter().map(|t| t.1.to_string()).collect(),
            heads: Some(out.iter().map(|t| t.3).collect()),
            labels: Some(out.iter().map(|t| t.2.to_string()).collect()),
        };
        debug_assert!(tree.check().is_ok());
        Payload::Tree(tree)
    }
}
