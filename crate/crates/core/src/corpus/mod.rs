//! Data model, file ingestion, preprocessing and split sampling.

mod conll;
mod conllu;
mod pool;
mod preprocess;
mod split;
mod tsv;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conll::{ingest_conll_ner, parse_conll_ner, write_conll_ner};
pub use conllu::{ingest_conllu, parse_conllu, write_conllu};
pub use pool::{Partition, Pool};
pub use preprocess::{dedup, length_filter, DEFAULT_MAX_TOKENS, DEFAULT_MAX_TEXT_TOKENS};
pub use split::{sample_splits, Allocation, SplitSpec};
pub use tsv::{ingest_tsv_classification, parse_tsv_classification, write_tsv_classification, TSV_HEADER};

use crate::graph;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}: sentence {sentence}: {message}")]
    Validation {
        source_name: String,
        sentence: String,
        message: String,
    },
    #[error("{source_name}: {message}")]
    Format { source_name: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid language tag {0:?}: expected non-empty lowercase ASCII")]
    InvalidLanguage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("duplicate instance id {0}")]
    DuplicateId(InstanceId),
    #[error("instance {0} is not in the {1} partition")]
    NotInPartition(InstanceId, Partition),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// Short language identifier such as `en` or `es`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageTag(String);

impl LanguageTag {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let ok = !code.is_empty()
            && code
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'_')
            && code.as_bytes()[0].is_ascii_lowercase();
        if ok {
            Ok(LanguageTag(code))
        } else {
            Err(CorpusError::InvalidLanguage(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageTag {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self> {
        LanguageTag::new(value)
    }
}

impl From<LanguageTag> for String {
    fn from(tag: LanguageTag) -> String {
        tag.0
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for LanguageTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        LanguageTag::new(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u64);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassificationText {
    pub text: String,
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Option<Vec<String>>,
}

/// Dependency tree over tokens `1..=n`; head `0` is the artificial root.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepTree {
    pub tokens: Vec<String>,
    pub upos: Vec<String>,
    pub heads: Option<Vec<usize>>,
    pub labels: Option<Vec<String>>,
}

impl DepTree {
    /// Checks lengths and, when heads are present, the single-root
    /// arborescence property.
    pub fn check(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if n == 0 {
            return Err("empty sentence".into());
        }
        if self.upos.len() != n {
            return Err(format!("{} UPOS tags for {n} tokens", self.upos.len()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(format!("{} labels for {n} tokens", labels.len()));
            }
        }
        if let Some(heads) = &self.heads {
            if heads.len() != n {
                return Err(format!("{} heads for {n} tokens", heads.len()));
            }
            graph::check_arborescence(heads).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Classification(ClassificationText),
    Tagged(TaggedSentence),
    Tree(DepTree),
}

impl Payload {
    /// Whitespace tokens for classification text, sentence length otherwise.
    pub fn token_count(&self) -> usize {
        match self {
            Payload::Classification(c) => c.text.split_whitespace().count(),
            Payload::Tagged(s) => s.tokens.len(),
            Payload::Tree(t) => t.tokens.len(),
        }
    }

    pub fn is_annotated(&self) -> bool {
        match self {
            Payload::Classification(c) => c.label.is_some(),
            Payload::Tagged(s) => s.tags.is_some(),
            Payload::Tree(t) => t.heads.is_some() && t.labels.is_some(),
        }
    }

    /// Budget cost: one unit per instance for classification, one per token otherwise.
    pub fn cost(&self) -> u64 {
        match self {
            Payload::Classification(_) => 1,
            _ => self.token_count() as u64,
        }
    }
}

/// One annotatable unit.
///
/// Pool members carry their gold annotation from the source file; it is only
/// consulted once the instance has been acquired into the labeled partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: InstanceId,
    pub language: LanguageTag,
    pub payload: Payload,
    pub cost: u64,
}

impl Instance {
    pub fn new(id: InstanceId, language: LanguageTag, payload: Payload) -> Self {
        let cost = payload.cost();
        Instance {
            id,
            language,
            payload,
            cost,
        }
    }

    pub fn tokens(&self) -> Option<&[String]> {
        match &self.payload {
            Payload::Classification(_) => None,
            Payload::Tagged(s) => Some(&s.tokens),
            Payload::Tree(t) => Some(&t.tokens),
        }
    }
}

/// Reassigns ids consecutively from `start` in sequence order.
///
/// Ingestion numbers every file from zero; callers combining several files
/// renumber them into one id space.
pub fn renumber(instances: &mut [Instance], start: u64) -> u64 {
    let mut next = start;
    for inst in instances {
        inst.id = InstanceId(next);
        next += 1;
    }
    next
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_tag_rules() {
        assert!(LanguageTag::new("en").is_ok());
        assert!(LanguageTag::new("zh-tw").is_ok());
        assert!(LanguageTag::new("").is_err());
        assert!(LanguageTag::new("EN").is_err());
        assert!(LanguageTag::new("ja ").is_err());
        let tag: LanguageTag = serde_json::from_str("\"es\"").unwrap();
        assert_eq!(tag.as_str(), "es");
        assert!(serde_json::from_str::<LanguageTag>("\"Es\"").is_err());
    }

    #[test]
    fn cost_follows_budget_unit() {
        let en = LanguageTag::new("en").unwrap();
        let c = Instance::new(
            InstanceId(0),
            en.clone(),
            Payload::Classification(ClassificationText {
                text: "a b c".into(),
                label: None,
            }),
        );
        assert_eq!(c.cost, 1);
        let t = Instance::new(
            InstanceId(1),
            en,
            Payload::Tagged(TaggedSentence {
                tokens: vec!["a".into(), "b".into()],
                tags: None,
            }),
        );
        assert_eq!(t.cost, 2);
    }

    #[test]
    fn dep_tree_check() {
        let mut t = DepTree {
            tokens: vec!["a".into(), "b".into()],
            upos: vec!["X".into(), "X".into()],
            heads: Some(vec![2, 0]),
            labels: Some(vec!["dep".into(), "root".into()]),
        };
        assert!(t.check().is_ok());
        t.heads = Some(vec![0, 0]);
        assert!(t.check().is_err());
        t.heads = Some(vec![2, 1]);
        assert!(t.check().is_err());
    }
}
