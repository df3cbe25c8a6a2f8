//! Uncertainty scores and budget-constrained batch selection.
//!
//! Every strategy follows one convention: lower scores are acquired first.
//! LC stores the model's confidence `max_y P(y)`, MNLP and the NLPDT family
//! store (normalised) log-probabilities, and Random stores a uniform draw.

use std::fmt;
use std::io;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, InstanceId, LanguageTag};
use crate::graph::{log_partition, tree_log_prob, Arborescence, ArcScores, GraphError};
use crate::models::{ModelError, TaskModel};
use crate::par::{self, Execution};
use crate::tasks::TaskKind;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("invalid distribution: components sum to {0}")]
    InvalidDistribution(f64),
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("strategy {strategy} does not apply to {task}")]
    Incompatible { strategy: StrategyKind, task: TaskKind },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub type Result<T, E = AcquisitionError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Lc,
    Mnlp,
    Nlpdt,
    NlpdtN2,
    NlpdtGlobal,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Random,
        StrategyKind::Lc,
        StrategyKind::Mnlp,
        StrategyKind::Nlpdt,
        StrategyKind::NlpdtN2,
        StrategyKind::NlpdtGlobal,
    ];

    pub fn is_compatible(self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (StrategyKind::Random, _)
                | (StrategyKind::Lc, TaskKind::Classification)
                | (StrategyKind::Mnlp, TaskKind::SequenceTagging)
                | (StrategyKind::Nlpdt | StrategyKind::NlpdtN2 | StrategyKind::NlpdtGlobal, TaskKind::DependencyParsing)
        )
    }

    /// The uncertainty strategy used for a task unless configured otherwise.
    pub fn default_for(task: TaskKind) -> StrategyKind {
        match task {
            TaskKind::Classification => StrategyKind::Lc,
            TaskKind::SequenceTagging => StrategyKind::Mnlp,
            TaskKind::DependencyParsing => StrategyKind::Nlpdt,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Lc => "lc",
            StrategyKind::Mnlp => "mnlp",
            StrategyKind::Nlpdt => "nlpdt",
            StrategyKind::NlpdtN2 => "nlpdt_n2",
            StrategyKind::NlpdtGlobal => "nlpdt_global",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub instance_id: InstanceId,
    pub score: f64,
    pub language: LanguageTag,
    pub cost: u64,
}

const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || p.iter().any(|&x| !(0.0..=1.0 + DISTRIBUTION_TOLERANCE).contains(&x)) {
        return Err(AcquisitionError::InvalidDistribution(sum));
    }
    Ok(())
}

/// Least confidence: the probability of the predicted class.
pub fn lc_score(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(dist.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Mean over tokens of the log-probability of each token's argmax tag.
pub fn mnlp_score(dists: &[Vec<f64>]) -> Result<f64> {
    if dists.is_empty() {
        return Err(AcquisitionError::EmptySentence);
    }
    let mut total = 0.0;
    for d in dists {
        check_distribution(d)?;
        total += d.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln();
    }
    Ok(total / dists.len() as f64)
}

/// Log-probability of the decoded tree under `head_probs` (indexed
/// `[d - 1][h]`), normalised according to the variant:
///
/// - `Nlpdt`: divided by the token count `N`
/// - `NlpdtN2`: divided by `N²`
/// - `NlpdtGlobal`: minus the log partition over all single-root trees of the
///   arc weights `P(h | d)`, i.e. the globally normalised log-probability
pub fn nlpdt_score(head_probs: &[Vec<f64>], tree: &Arborescence, variant: StrategyKind) -> Result<f64> {
    let n = tree.len();
    if n == 0 {
        return Err(AcquisitionError::EmptySentence);
    }
    let lp = tree_log_prob(head_probs, tree);
    match variant {
        StrategyKind::Nlpdt => Ok(lp / n as f64),
        StrategyKind::NlpdtN2 => Ok(lp / (n * n) as f64),
        StrategyKind::NlpdtGlobal => {
            if lp == f64::NEG_INFINITY {
                return Ok(lp);
            }
            let scores = ArcScores::from_fn(n, |h, d| {
                let p = head_probs[d - 1][h];
                if p > 0.0 {
                    p.ln()
                } else {
                    f64::NEG_INFINITY
                }
            });
            // A tree is at most as likely as the whole tree set.
            Ok((lp - log_partition(&scores)?).min(0.0))
        }
        other => Err(AcquisitionError::Incompatible {
            strategy: other,
            task: TaskKind::DependencyParsing,
        }),
    }
}

/// Uniform `[0, 1)` draws for `ids` taken in ascending id order from a
/// stream determined by `(seed, round)`; returned in the order of `ids`.
pub fn random_scores(ids: &[InstanceId], seed: u64, round: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| ids[i]);
    let mut out = vec![0.0; ids.len()];
    for i in order {
        out[i] = rng.gen::<f64>();
    }
    out
}

/// Scores unlabeled `candidates` with `model` under `strategy`. Random
/// ignores the model and uses `(seed, round)`.
pub fn score_instances(
    model: &TaskModel,
    candidates: &[&Instance],
    strategy: StrategyKind,
    seed: u64,
    round: u32,
    exec: Execution,
) -> Result<Vec<AcquisitionScore>> {
    if !strategy.is_compatible(model.task()) {
        return Err(AcquisitionError::Incompatible {
            strategy,
            task: model.task(),
        });
    }
    let values: Vec<f64> = match strategy {
        StrategyKind::Random => {
            let ids: Vec<InstanceId> = candidates.iter().map(|c| c.id).collect();
            random_scores(&ids, seed, round)
        }
        StrategyKind::Lc => par::try_map(exec, candidates, |inst| lc_score(&model.predict_class_proba(inst)?))?,
        StrategyKind::Mnlp => par::try_map(exec, candidates, |inst| mnlp_score(&model.predict_tag_probas(inst)?))?,
        variant => par::try_map(exec, candidates, |inst| {
            let parse = model.parse(inst)?;
            nlpdt_score(parse.probas.heads(), &parse.tree, variant)
        })?,
    };
    Ok(candidates
        .iter()
        .zip(values)
        .map(|(inst, score)| AcquisitionScore {
            instance_id: inst.id,
            score,
            language: inst.language.clone(),
            cost: inst.cost,
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Selection {
    pub ids: Vec<InstanceId>,
    pub spent: u64,
}

/// Takes items in order, keeping each one whose cost still fits in the
/// remaining budget and skipping those that do not.
pub(crate) fn first_fit<T>(items: impl IntoIterator<Item = (T, u64)>, budget: u64) -> (Vec<T>, u64) {
    let mut taken = Vec::new();
    let mut spent = 0u64;
    for (item, cost) in items {
        if spent == budget {
            break;
        }
        if cost <= budget - spent {
            spent += cost;
            taken.push(item);
        }
    }
    (taken, spent)
}

/// Sorts ascending by `(score, instance_id)` and fills `budget` first-fit:
/// instances that do not fit are skipped and traversal continues.
pub fn select_batch(scores: &[AcquisitionScore], budget: u64) -> Selection {
    let mut ranked: Vec<&AcquisitionScore> = scores.iter().collect();
    ranked.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.instance_id.cmp(&b.instance_id)));

    // Suffix minimum of costs lets the scan stop once nothing else can fit.
    let mut suffix_min = vec![u64::MAX; ranked.len() + 1];
    for i in (0..ranked.len()).rev() {
        suffix_min[i] = suffix_min[i + 1].min(ranked[i].cost);
    }
    let mut ids = Vec::new();
    let mut spent = 0u64;
    for (i, s) in ranked.iter().enumerate() {
        let remaining = budget - spent;
        if remaining < suffix_min[i] {
            break;
        }
        if s.cost <= remaining {
            spent += s.cost;
            ids.push(s.instance_id);
        }
    }
    Selection { ids, spent }
}

/// One row of the acquisition log CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub round: u32,
    pub instance_id: InstanceId,
    pub language: LanguageTag,
    pub cost: u64,
    pub score: f64,
    pub strategy: StrategyKind,
}

/// Writes records as CSV with header
/// `round,instance_id,language,cost,score,strategy`.
pub fn write_acquisition_log<W: io::Write>(records: &[AcquisitionRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["round", "instance_id", "language", "cost", "score", "strategy"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_acquisition_log<R: io::Read>(input: R) -> csv::Result<Vec<AcquisitionRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
