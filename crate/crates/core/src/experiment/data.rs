use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::corpus::{self, Instance, LanguageTag, Payload};
use crate::models::TaskModel;
use crate::tasks::TaskKind;

/// Train and test files of one language.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Preprocessed corpora of all languages in one id space.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub task: TaskKind,
    /// Training instances of every language, ids `0..train.len()`.
    pub train: Vec<Instance>,
    /// Test instances per language, ids following the training ids.
    pub test: BTreeMap<LanguageTag, Vec<Instance>>,
    /// Output inventory over all training and test annotations.
    pub outputs: Vec<String>,
}

/// Default length cap: sentence length for token tasks, text truncation for
/// classification.
pub fn default_max_length(task: TaskKind) -> usize {
    match task {
        TaskKind::Classification => corpus::DEFAULT_MAX_TEXT_TOKENS,
        _ => corpus::DEFAULT_MAX_TOKENS,
    }
}

fn payload_matches(task: TaskKind, p: &Payload) -> bool {
    matches!(
        (task, p),
        (TaskKind::Classification, Payload::Classification(_))
            | (TaskKind::SequenceTagging, Payload::Tagged(_))
            | (TaskKind::DependencyParsing, Payload::Tree(_))
    )
}

impl ExperimentData {
    /// Deduplicates and length-filters the training data, truncates
    /// classification test texts, renumbers everything into one id space and
    /// collects the output inventory.
    pub fn new(
        task: TaskKind,
        train: BTreeMap<LanguageTag, Vec<Instance>>,
        test: BTreeMap<LanguageTag, Vec<Instance>>,
        max_length: Option<usize>,
    ) -> Result<Self> {
        let max_length = max_length.unwrap_or_else(|| default_max_length(task));
        let train_langs: BTreeSet<_> = train.keys().collect();
        let test_langs: BTreeSet<_> = test.keys().collect();
        if train_langs != test_langs {
            return Err(ExperimentError::Config(format!(
                "train and test languages differ: {train_langs:?} vs {test_langs:?}"
            )));
        }
        let mut problems = Vec::new();
        for (lang, insts) in train.iter().chain(&test) {
            if let Some(bad) = insts.iter().find(|i| &i.language != lang) {
                problems.push(format!("instance {} of language {} listed under {lang}", bad.id, bad.language));
            }
            if let Some(bad) = insts.iter().find(|i| !payload_matches(task, &i.payload)) {
                problems.push(format!("instance {} of {lang} is not a {task} instance", bad.id));
            }
            if let Some(bad) = insts.iter().find(|i| !i.payload.is_annotated()) {
                problems.push(format!("instance {} of {lang} has no gold annotation", bad.id));
            }
        }
        if !problems.is_empty() {
            return Err(ExperimentError::Config(problems.join("; ")));
        }

        let mut all_train = Vec::new();
        for (lang, insts) in train {
            let before = insts.len();
            let kept = corpus::length_filter(corpus::dedup(insts), max_length);
            if kept.len() < before {
                log::info!("{lang}: kept {} of {before} training instances after dedup/length filter", kept.len());
            }
            if kept.is_empty() {
                return Err(ExperimentError::Config(format!("language {lang} has no training data")));
            }
            all_train.extend(kept);
        }
        let mut next = corpus::renumber(&mut all_train, 0);
        let mut tests = BTreeMap::new();
        for (lang, insts) in test {
            let mut insts = if task == TaskKind::Classification {
                corpus::length_filter(insts, max_length)
            } else {
                insts
            };
            if insts.is_empty() {
                return Err(ExperimentError::Config(format!("language {lang} has no test data")));
            }
            next = corpus::renumber(&mut insts, next);
            tests.insert(lang, insts);
        }
        let outputs = TaskModel::label_inventory(task, all_train.iter().chain(tests.values().flatten()));
        Ok(ExperimentData {
            task,
            train: all_train,
            test: tests,
            outputs,
        })
    }

    /// Reads the per-language files in the format implied by `task`:
    /// TSV for classification, CoNLL for tagging, CoNLL-U for parsing.
    pub fn load(task: TaskKind, files: &BTreeMap<LanguageTag, DataFiles>, max_length: Option<usize>) -> Result<Self> {
        let read = |path: &PathBuf, lang: &LanguageTag| -> Result<Vec<Instance>> {
            Ok(match task {
                TaskKind::Classification => corpus::ingest_tsv_classification(path)?,
                TaskKind::SequenceTagging => corpus::ingest_conll_ner(path, lang)?,
                TaskKind::DependencyParsing => corpus::ingest_conllu(path, lang)?,
            })
        };
        let mut train = BTreeMap::new();
        let mut test = BTreeMap::new();
        for (lang, f) in files {
            train.insert(lang.clone(), read(&f.train, lang)?);
            test.insert(lang.clone(), read(&f.test, lang)?);
        }
        Self::new(task, train, test, max_length)
    }

    pub fn languages(&self) -> BTreeSet<LanguageTag> {
        self.test.keys().cloned().collect()
    }

    /// Training instances whose language is in `languages`.
    pub fn train_for(&self, languages: &BTreeSet<LanguageTag>) -> Vec<Instance> {
        self.train.iter().filter(|i| languages.contains(&i.language)).cloned().collect()
    }

    /// Total training cost per language.
    pub fn train_cost(&self) -> BTreeMap<LanguageTag, u64> {
        let mut out = BTreeMap::new();
        for i in &self.train {
            *out.entry(i.language.clone()).or_insert(0) += i.cost;
        }
        out
    }
}
