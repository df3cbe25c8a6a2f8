//! Task kinds and evaluation metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DepTree, LanguageTag};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {pred} predictions for {gold} gold items{}", context.as_ref().map(|c| format!(" ({c})")).unwrap_or_default())]
    LengthMismatch {
        pred: usize,
        gold: usize,
        context: Option<String>,
    },
    #[error("nothing to evaluate")]
    Empty,
    #[error("invalid BIO tag {0:?}")]
    InvalidTag(String),
    #[error("gold tree {0} has no heads")]
    MissingGold(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetUnit {
    Instance,
    Token,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    SequenceTagging,
    DependencyParsing,
}

impl TaskKind {
    pub fn budget_unit(self) -> BudgetUnit {
        match self {
            TaskKind::Classification => BudgetUnit::Instance,
            TaskKind::SequenceTagging | TaskKind::DependencyParsing => BudgetUnit::Token,
        }
    }

    /// Metric used for model selection and headline reporting.
    pub fn primary_metric(self) -> &'static str {
        match self {
            TaskKind::Classification => "accuracy",
            TaskKind::SequenceTagging => "f1",
            TaskKind::DependencyParsing => "las",
        }
    }

    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            TaskKind::Classification => &["accuracy"],
            TaskKind::SequenceTagging => &["f1", "precision", "recall"],
            TaskKind::DependencyParsing => &["las", "uas"],
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::SequenceTagging => "sequence_tagging",
            TaskKind::DependencyParsing => "dependency_parsing",
        })
    }
}

/// One BIO tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

impl FromStr for BioTag {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        if s == "O" {
            return Ok(BioTag::Outside);
        }
        match s.split_once('-') {
            Some(("B", t)) if !t.is_empty() => Ok(BioTag::Begin(t.to_string())),
            Some(("I", t)) if !t.is_empty() => Ok(BioTag::Inside(t.to_string())),
            _ => Err(EvalError::InvalidTag(s.to_string())),
        }
    }
}

/// Entity span `[start, end)` of a given type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

/// Extracts maximal spans. An `I-X` after `O`, at sentence start, or after a
/// tag of another type opens a new span, as the conlleval scorer does.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>, EvalError> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag.as_ref().parse::<BioTag>()? {
            BioTag::Outside => {
                if let Some((kind, start)) = open.take() {
                    spans.push(Span { kind, start, end: i });
                }
            }
            BioTag::Begin(t) => {
                if let Some((kind, start)) = open.take() {
                    spans.push(Span { kind, start, end: i });
                }
                open = Some((t, i));
            }
            BioTag::Inside(t) => match &open {
                Some((kind, _)) if *kind == t => {}
                _ => {
                    if let Some((kind, start)) = open.take() {
                        spans.push(Span { kind, start, end: i });
                    }
                    open = Some((t, i));
                }
            },
        }
    }
    if let Some((kind, start)) = open {
        spans.push(Span { kind, start, end: tags.len() });
    }
    Ok(spans)
}

/// Raw counts retained so reports can be re-aggregated exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricCounts {
    Accuracy { correct: u64, total: u64 },
    Spans { true_positives: u64, predicted: u64, gold: u64 },
    Attachment { tokens: u64, correct_heads: u64, correct_labeled: u64 },
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricCounts {
    pub fn values(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        match *self {
            MetricCounts::Accuracy { correct, total } => {
                out.insert("accuracy".into(), ratio(correct, total));
            }
            MetricCounts::Spans {
                true_positives,
                predicted,
                gold,
            } => {
                let p = ratio(true_positives, predicted);
                let r = ratio(true_positives, gold);
                out.insert("precision".into(), p);
                out.insert("recall".into(), r);
                out.insert("f1".into(), f1(p, r));
            }
            MetricCounts::Attachment {
                tokens,
                correct_heads,
                correct_labeled,
            } => {
                out.insert("uas".into(), ratio(correct_heads, tokens));
                out.insert("las".into(), ratio(correct_labeled, tokens));
            }
        }
        out
    }

    /// Sums two count records of the same kind.
    pub fn merge(&self, other: &MetricCounts) -> Option<MetricCounts> {
        use MetricCounts::*;
        Some(match (*self, *other) {
            (Accuracy { correct: a, total: b }, Accuracy { correct: c, total: d }) => Accuracy {
                correct: a + c,
                total: b + d,
            },
            (
                Spans {
                    true_positives: a,
                    predicted: b,
                    gold: c,
                },
                Spans {
                    true_positives: d,
                    predicted: e,
                    gold: f,
                },
            ) => Spans {
                true_positives: a + d,
                predicted: b + e,
                gold: c + f,
            },
            (
                Attachment {
                    tokens: a,
                    correct_heads: b,
                    correct_labeled: c,
                },
                Attachment {
                    tokens: d,
                    correct_heads: e,
                    correct_labeled: f,
                },
            ) => Attachment {
                tokens: a + d,
                correct_heads: b + e,
                correct_labeled: c + f,
            },
            _ => return None,
        })
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageMetrics {
    pub values: BTreeMap<String, f64>,
    pub counts: MetricCounts,
}

impl From<MetricCounts> for LanguageMetrics {
    fn from(counts: MetricCounts) -> Self {
        LanguageMetrics {
            values: counts.values(),
            counts,
        }
    }
}

/// Per-language metric values with the counts they were computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub languages: BTreeMap<LanguageTag, LanguageMetrics>,
}

impl MetricReport {
    pub fn new(task: TaskKind) -> Self {
        MetricReport {
            task,
            languages: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, language: LanguageTag, counts: MetricCounts) {
        self.languages.insert(language, counts.into());
    }

    pub fn value(&self, language: &LanguageTag, metric: &str) -> Option<f64> {
        self.languages.get(language)?.values.get(metric).copied()
    }

    /// Micro-average over languages, recomputed from counts.
    pub fn micro(&self) -> Option<LanguageMetrics> {
        let mut iter = self.languages.values().map(|m| m.counts);
        let first = iter.next()?;
        iter.try_fold(first, |acc, c| acc.merge(&c)).map(Into::into)
    }

    /// Unweighted mean of a metric over languages.
    pub fn macro_mean(&self, metric: &str) -> Option<f64> {
        let vals: Vec<f64> = self.languages.values().filter_map(|m| m.values.get(metric).copied()).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn check_lengths(pred: usize, gold: usize, context: Option<String>) -> Result<(), EvalError> {
    if pred != gold {
        return Err(EvalError::LengthMismatch { pred, gold, context });
    }
    Ok(())
}

pub fn accuracy_counts<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<MetricCounts, EvalError> {
    check_lengths(pred.len(), gold.len(), None)?;
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as u64;
    Ok(MetricCounts::Accuracy {
        correct,
        total: gold.len() as u64,
    })
}

pub fn accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> Result<f64, EvalError> {
    let counts = accuracy_counts(pred, gold)?;
    Ok(counts.values()["accuracy"])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MetricCounts,
}

pub fn span_counts<S: AsRef<str>>(pred: &[Vec<S>], gold: &[Vec<S>]) -> Result<MetricCounts, EvalError> {
    check_lengths(pred.len(), gold.len(), None)?;
    let (mut tp, mut np, mut ng) = (0u64, 0u64, 0u64);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        check_lengths(p.len(), g.len(), Some(format!("sentence {i}")))?;
        let ps = extract_spans(p)?;
        let gs: std::collections::HashSet<Span> = extract_spans(g)?.into_iter().collect();
        np += ps.len() as u64;
        ng += gs.len() as u64;
        tp += ps.iter().filter(|s| gs.contains(*s)).count() as u64;
    }
    Ok(MetricCounts::Spans {
        true_positives: tp,
        predicted: np,
        gold: ng,
    })
}

/// Micro-averaged exact-match span precision, recall and F1.
pub fn span_f1<S: AsRef<str>>(pred: &[Vec<S>], gold: &[Vec<S>]) -> Result<SpanScores, EvalError> {
    let counts = span_counts(pred, gold)?;
    let v = counts.values();
    Ok(SpanScores {
        precision: v["precision"],
        recall: v["recall"],
        f1: v["f1"],
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttachmentScores {
    pub uas: f64,
    pub las: f64,
    pub counts: MetricCounts,
}

/// Counts every token, punctuation included. A prediction without labels
/// scores zero labeled attachments.
pub fn attachment_counts(pred: &[DepTree], gold: &[DepTree]) -> Result<MetricCounts, EvalError> {
    check_lengths(pred.len(), gold.len(), None)?;
    let (mut tokens, mut heads, mut labeled) = (0u64, 0u64, 0u64);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        check_lengths(p.tokens.len(), g.tokens.len(), Some(format!("sentence {i}")))?;
        let gh = g.heads.as_ref().ok_or(EvalError::MissingGold(i))?;
        let gl = g.labels.as_ref();
        let ph = p.heads.as_ref();
        let pl = p.labels.as_ref();
        for t in 0..g.tokens.len() {
            tokens += 1;
            let head_ok = ph.is_some_and(|h| h[t] == gh[t]);
            if head_ok {
                heads += 1;
                let label_ok = matches!((pl, gl), (Some(a), Some(b)) if a[t] == b[t]);
                if label_ok {
                    labeled += 1;
                }
            }
        }
    }
    Ok(MetricCounts::Attachment {
        tokens,
        correct_heads: heads,
        correct_labeled: labeled,
    })
}

pub fn attachment_scores(pred: &[DepTree], gold: &[DepTree]) -> Result<AttachmentScores, EvalError> {
    let counts = attachment_counts(pred, gold)?;
    let v = counts.values();
    Ok(AttachmentScores {
        uas: v["uas"],
        las: v["las"],
        counts,
    })
}
