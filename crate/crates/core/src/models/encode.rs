use crate::corpus::{Instance, Payload};
use crate::features::{FeatureSpace, SparseVec};
use crate::tasks::TaskKind;

use super::{ModelError, Result};

/// Featurised instance with gold output indices when annotated.
#[derive(Clone, Debug, PartialEq)]
pub enum Example {
    Text {
        x: SparseVec,
        label: Option<usize>,
    },
    Tokens {
        xs: Vec<SparseVec>,
        tags: Option<Vec<usize>>,
    },
    /// `arcs[h * n + d - 1]` holds the features of `h → d`; self-loops are empty.
    Tree {
        n: usize,
        arcs: Vec<SparseVec>,
        heads: Option<Vec<usize>>,
        labels: Option<Vec<usize>>,
    },
}

impl Example {
    pub fn arc(&self, head: usize, dep: usize) -> &SparseVec {
        match self {
            Example::Tree { n, arcs, .. } => &arcs[head * n + dep - 1],
            _ => panic!("arc features requested for a non-tree example"),
        }
    }
}

fn index_of(outputs: &[String], label: &str) -> Result<usize> {
    outputs
        .binary_search_by(|o| o.as_str().cmp(label))
        .or_else(|_| outputs.iter().position(|o| o == label).ok_or(()))
        .map_err(|_| ModelError::UnknownLabel(label.to_string()))
}

/// Featurises `inst`. With `gold` set, its annotation is required and mapped
/// onto `outputs`.
pub fn encode(task: TaskKind, space: &FeatureSpace, outputs: &[String], inst: &Instance, gold: bool) -> Result<Example> {
    match (&inst.payload, task) {
        (Payload::Classification(c), TaskKind::Classification) => {
            let label = match (&c.label, gold) {
                (Some(l), true) => Some(index_of(outputs, l)?),
                (None, true) => return Err(ModelError::MissingAnnotation(inst.id)),
                _ => None,
            };
            Ok(Example::Text {
                x: space.text_features(&c.text),
                label,
            })
        }
        (Payload::Tagged(s), TaskKind::SequenceTagging) => {
            if s.tokens.is_empty() {
                return Err(ModelError::Config(format!("instance {} has no tokens", inst.id)));
            }
            let tags = match (&s.tags, gold) {
                (Some(tags), true) => Some(tags.iter().map(|t| index_of(outputs, t)).collect::<Result<Vec<_>>>()?),
                (None, true) => return Err(ModelError::MissingAnnotation(inst.id)),
                _ => None,
            };
            let xs = (0..s.tokens.len()).map(|i| space.token_features(&s.tokens, i)).collect();
            Ok(Example::Tokens { xs, tags })
        }
        (Payload::Tree(t), TaskKind::DependencyParsing) => {
            let n = t.tokens.len();
            if n == 0 {
                return Err(ModelError::Config(format!("instance {} has no tokens", inst.id)));
            }
            let (heads, labels) = if gold {
                match (&t.heads, &t.labels) {
                    (Some(h), Some(l)) => (
                        Some(h.clone()),
                        Some(l.iter().map(|x| index_of(outputs, x)).collect::<Result<Vec<_>>>()?),
                    ),
                    _ => return Err(ModelError::MissingAnnotation(inst.id)),
                }
            } else {
                (None, None)
            };
            let mut arcs = Vec::with_capacity((n + 1) * n);
            for h in 0..=n {
                for d in 1..=n {
                    arcs.push(if h == d {
                        Vec::new()
                    } else {
                        space.arc_features(&t.tokens, &t.upos, h, d)
                    });
                }
            }
            Ok(Example::Tree { n, arcs, heads, labels })
        }
        _ => Err(ModelError::WrongPayload(task)),
    }
}
