use crate::corpus::{DepTree, Instance, Payload};
use crate::graph::{chu_liu_edmonds, Arborescence, ArcScores};
use crate::par::{self, Execution};
use crate::tasks::{accuracy_counts, attachment_counts, span_counts, MetricCounts, TaskKind};

use super::encode::{encode, Example};
use super::objective::Params;
use super::{argmax, softmax_in_place, ModelError, Result, TaskModel};

/// Head distributions `P(h | d)` and label distributions `P(l | h → d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcProbas {
    n: usize,
    head_log: Vec<Vec<f64>>,
    heads: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
}

impl ArcProbas {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distribution over heads `0..=n` for dependent `d` (1-based); the
    /// self-loop entry is zero.
    pub fn head(&self, dep: usize) -> &[f64] {
        &self.heads[dep - 1]
    }

    /// All head distributions, indexed by `d - 1`.
    pub fn heads(&self) -> &[Vec<f64>] {
        &self.heads
    }

    pub fn label(&self, head: usize, dep: usize) -> &[f64] {
        &self.labels[head * self.n + dep - 1]
    }

    /// `log P(h | d)` as arc scores; forbidden arcs carry the graph sentinel.
    pub fn log_scores(&self) -> ArcScores {
        ArcScores::from_fn(self.n, |h, d| self.head_log[d - 1][h])
    }
}

/// A decoded tree with the distributions it was decoded from.
#[derive(Clone, Debug, PartialEq)]
pub struct Parse {
    pub probas: ArcProbas,
    pub tree: Arborescence,
    pub labels: Vec<String>,
}

impl Parse {
    pub fn to_dep_tree(&self, tokens: &[String], upos: &[String]) -> DepTree {
        DepTree {
            tokens: tokens.to_vec(),
            upos: upos.to_vec(),
            heads: Some(self.tree.heads.clone()),
            labels: Some(self.labels.clone()),
        }
    }
}

pub(crate) fn class_proba(params: Params<'_>, x: &crate::features::SparseVec) -> Vec<f64> {
    let mut p = params.output_scores(x, 0);
    softmax_in_place(&mut p);
    p
}

pub(crate) fn arc_probas(params: Params<'_>, ex: &Example) -> ArcProbas {
    let Example::Tree { n, .. } = ex else {
        panic!("arc probabilities need a tree example");
    };
    let n = *n;
    let mut head_log = Vec::with_capacity(n);
    let mut heads = Vec::with_capacity(n);
    for d in 1..=n {
        let scores = params.head_scores(ex, n, d);
        let mut p = scores.clone();
        let lz = softmax_in_place(&mut p);
        head_log.push(scores.iter().map(|s| s - lz).collect());
        heads.push(p);
    }
    let mut labels = Vec::with_capacity((n + 1) * n);
    for h in 0..=n {
        for d in 1..=n {
            if h == d {
                labels.push(Vec::new());
            } else {
                labels.push(class_proba_rows(params, ex.arc(h, d)));
            }
        }
    }
    ArcProbas { n, head_log, heads, labels }
}

fn class_proba_rows(params: Params<'_>, x: &crate::features::SparseVec) -> Vec<f64> {
    let mut p = params.output_scores(x, 1);
    softmax_in_place(&mut p);
    p
}

pub(crate) fn decode(params: Params<'_>, ex: &Example) -> Result<(ArcProbas, Arborescence, Vec<usize>)> {
    let probas = arc_probas(params, ex);
    let tree = chu_liu_edmonds(&probas.log_scores())?;
    let labels = tree
        .heads
        .iter()
        .enumerate()
        .map(|(i, &h)| argmax(probas.label(h, i + 1)))
        .collect();
    Ok((probas, tree, labels))
}

/// Task metric counts over encoded, annotated examples.
pub(crate) fn evaluate_examples(params: Params<'_>, outputs: &[String], examples: &[&Example]) -> Result<MetricCounts> {
    match params.task {
        TaskKind::Classification => {
            let mut pred = Vec::with_capacity(examples.len());
            let mut gold = Vec::with_capacity(examples.len());
            for ex in examples {
                let Example::Text { x, label } = ex else { unreachable!() };
                pred.push(argmax(&class_proba(params, x)));
                gold.push(label.expect("annotated"));
            }
            Ok(accuracy_counts(&pred, &gold)?)
        }
        TaskKind::SequenceTagging => {
            let mut pred = Vec::with_capacity(examples.len());
            let mut gold = Vec::with_capacity(examples.len());
            for ex in examples {
                let Example::Tokens { xs, tags } = ex else { unreachable!() };
                pred.push(xs.iter().map(|x| outputs[argmax(&class_proba(params, x))].as_str()).collect::<Vec<_>>());
                gold.push(tags.as_ref().expect("annotated").iter().map(|&t| outputs[t].as_str()).collect::<Vec<_>>());
            }
            Ok(span_counts(&pred, &gold)?)
        }
        TaskKind::DependencyParsing => {
            let mut pred = Vec::with_capacity(examples.len());
            let mut gold = Vec::with_capacity(examples.len());
            for ex in examples {
                let Example::Tree { n, heads, labels, .. } = ex else { unreachable!() };
                let (_, tree, lab) = decode(params, ex)?;
                let blank = vec![String::new(); *n];
                pred.push(DepTree {
                    tokens: blank.clone(),
                    upos: blank.clone(),
                    heads: Some(tree.heads),
                    labels: Some(lab.iter().map(|&l| outputs[l].clone()).collect()),
                });
                gold.push(DepTree {
                    tokens: blank.clone(),
                    upos: blank,
                    heads: heads.clone(),
                    labels: labels.as_ref().map(|ls| ls.iter().map(|&l| outputs[l].clone()).collect()),
                });
            }
            Ok(attachment_counts(&pred, &gold)?)
        }
    }
}

impl TaskModel {
    fn encode_input(&self, inst: &Instance) -> Result<Example> {
        encode(self.task, &self.space, &self.outputs, inst, false)
    }

    /// Class distribution, ordered as [`TaskModel::outputs`].
    pub fn predict_class_proba(&self, inst: &Instance) -> Result<Vec<f64>> {
        self.require(TaskKind::Classification)?;
        let Example::Text { x, .. } = self.encode_input(inst)? else { unreachable!() };
        Ok(class_proba(Params::of(self), &x))
    }

    pub fn predict_class(&self, inst: &Instance) -> Result<String> {
        let p = self.predict_class_proba(inst)?;
        Ok(self.outputs[argmax(&p)].clone())
    }

    /// One tag distribution per token.
    pub fn predict_tag_probas(&self, inst: &Instance) -> Result<Vec<Vec<f64>>> {
        self.require(TaskKind::SequenceTagging)?;
        let Example::Tokens { xs, .. } = self.encode_input(inst)? else { unreachable!() };
        let params = Params::of(self);
        Ok(xs.iter().map(|x| class_proba(params, x)).collect())
    }

    pub fn predict_tags(&self, inst: &Instance) -> Result<Vec<String>> {
        Ok(self
            .predict_tag_probas(inst)?
            .iter()
            .map(|p| self.outputs[argmax(p)].clone())
            .collect())
    }

    pub fn predict_arc_probas(&self, inst: &Instance) -> Result<ArcProbas> {
        self.require(TaskKind::DependencyParsing)?;
        let ex = self.encode_input(inst)?;
        Ok(arc_probas(Params::of(self), &ex))
    }

    /// Chu-Liu/Edmonds decoding over `log P(h | d)` plus argmax labels.
    pub fn parse(&self, inst: &Instance) -> Result<Parse> {
        self.require(TaskKind::DependencyParsing)?;
        let ex = self.encode_input(inst)?;
        let (probas, tree, labels) = decode(Params::of(self), &ex)?;
        Ok(Parse {
            probas,
            tree,
            labels: labels.into_iter().map(|l| self.outputs[l].clone()).collect(),
        })
    }

    pub fn decode_tree(&self, inst: &Instance) -> Result<DepTree> {
        let parse = self.parse(inst)?;
        let Payload::Tree(t) = &inst.payload else {
            return Err(ModelError::WrongPayload(self.task));
        };
        Ok(parse.to_dep_tree(&t.tokens, &t.upos))
    }

    /// Metric counts of this model on annotated instances.
    pub fn evaluate(&self, instances: &[&Instance], exec: Execution) -> Result<MetricCounts> {
        self.require(self.task)?;
        let examples = par::try_map(exec, instances, |inst| encode(self.task, &self.space, &self.outputs, inst, true))?;
        let refs: Vec<&Example> = examples.iter().collect();
        evaluate_examples(Params::of(self), &self.outputs, &refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassificationText, InstanceId, LanguageTag, TaggedSentence};
    use crate::features::FeatureSpace;

    fn space() -> FeatureSpace {
        FeatureSpace {
            hash_dimension: 1 << 10,
            ngram_min: 1,
            ngram_max: 2,
        }
    }

    fn text_inst(t: &str) -> Instance {
        Instance::new(
            InstanceId(0),
            LanguageTag::new("en").unwrap(),
            Payload::Classification(ClassificationText {
                text: t.into(),
                label: None,
            }),
        )
    }

    fn tree_inst(words: &[&str]) -> Instance {
        Instance::new(
            InstanceId(0),
            LanguageTag::new("en").unwrap(),
            Payload::Tree(DepTree {
                tokens: words.iter().map(|s| s.to_string()).collect(),
                upos: words.iter().map(|_| "X".to_string()).collect(),
                heads: None,
                labels: None,
            }),
        )
    }

    fn zero_model(task: TaskKind, outputs: &[&str]) -> TaskModel {
        let outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
        let len = super::super::weight_len(task, &space(), outputs.len());
        TaskModel::with_weights(task, space(), outputs, vec![0.0; len]).unwrap()
    }

    #[test]
    fn untrained_model_refuses() {
        let m = TaskModel::new(TaskKind::Classification, space(), vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(m.predict_class_proba(&text_inst("x")), Err(ModelError::Untrained)));
    }

    #[test]
    fn zero_weights_are_uniform() {
        let m = zero_model(TaskKind::Classification, &["neg", "pos", "neu"]);
        let p = m.predict_class_proba(&text_inst("whatever text")).unwrap();
        for q in &p {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }

        let m = zero_model(TaskKind::SequenceTagging, &["B-PER", "O"]);
        let inst = Instance::new(
            InstanceId(0),
            LanguageTag::new("en").unwrap(),
            Payload::Tagged(TaggedSentence {
                tokens: vec!["a".into(), "b".into()],
                tags: None,
            }),
        );
        for dist in m.predict_tag_probas(&inst).unwrap() {
            assert_eq!(dist, vec![0.5, 0.5]);
        }

        let m = zero_model(TaskKind::DependencyParsing, &["dep", "root"]);
        let probas = m.predict_arc_probas(&tree_inst(&["a", "b"])).unwrap();
        assert_eq!(probas.head(1), &[0.5, 0.0, 0.5]);
        assert_eq!(probas.head(2), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn single_token_parse() {
        let m = zero_model(TaskKind::DependencyParsing, &["root"]);
        let inst = tree_inst(&["hello"]);
        let probas = m.predict_arc_probas(&inst).unwrap();
        assert_eq!(probas.head(1), &[1.0, 0.0]);
        assert_eq!(m.decode_tree(&inst).unwrap().heads, Some(vec![0]));
    }

    #[test]
    fn wrong_task_and_payload() {
        let m = zero_model(TaskKind::Classification, &["a", "b"]);
        assert!(matches!(m.predict_tag_probas(&text_inst("x")), Err(ModelError::WrongTask { .. })));
        assert!(matches!(m.predict_class_proba(&tree_inst(&["x"])), Err(ModelError::WrongPayload(_))));
    }
}
