//! Budget-allocation settings, the round protocol, curriculum analysis and
//! aggregation across replicates.

mod aggregate;
mod baselines;
mod curriculum;
mod data;
mod runner;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{AcquisitionError, StrategyKind};
use crate::corpus::{CorpusError, LanguageTag};
use crate::models::ModelError;
use crate::tasks::{BudgetUnit, EvalError, MetricReport};

pub use aggregate::{aggregate, AggregateReport};
pub use baselines::{run_full_data_baselines, FullDataReport};
pub use curriculum::{curriculum, CurriculumReport, CurriculumRound};
pub use data::{DataFiles, ExperimentData};
pub use runner::{run_cell, run_rounds, RunContext, RunOutput};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

fn default_rounds() -> u32 {
    4
}

/// Seed, acquisition and validation budgets in the task's cost unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub seed: u64,
    pub budget: u64,
    pub validation: u64,
    /// Training rounds: one on the seed plus `rounds - 1` acquisitions.
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    pub unit: BudgetUnit,
}

impl BudgetSpec {
    /// `s_t = b_t = v_t = size`, four rounds.
    pub fn uniform(size: u64, unit: BudgetUnit) -> Self {
        BudgetSpec {
            seed: size,
            budget: size,
            validation: size,
            rounds: default_rounds(),
            unit,
        }
    }

    pub fn acquisition_rounds(&self) -> u32 {
        self.rounds - 1
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut errs = Vec::new();
        for (name, v) in [("seed", self.seed), ("budget", self.budget), ("validation", self.validation)] {
            if v == 0 {
                errs.push(format!("budget.{name} must be positive"));
            }
        }
        if self.rounds < 2 {
            errs.push(format!("budget.rounds must be at least 2, got {}", self.rounds));
        } else if self.budget < self.acquisition_rounds() as u64 {
            errs.push(format!(
                "budget.budget {} is smaller than the {} acquisition rounds",
                self.budget,
                self.acquisition_rounds()
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// How the annotation budget is spread over languages.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocationKind {
    /// Seed, validation and budget all in `source`; other languages zero-shot.
    MonoA { source: LanguageTag },
    /// One model per language, each with a `1/n` share.
    Mma,
    /// One model acquiring from all languages jointly.
    Sma,
}

impl fmt::Display for AllocationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AllocationKind::MonoA { source } => write!(f, "MonoA[{source}]"),
            AllocationKind::Mma => f.write_str("MMA"),
            AllocationKind::Sma => f.write_str("SMA"),
        }
    }
}

/// One experimental cell: allocation plus whether acquisition uses the
/// uncertainty strategy (`with_al`) or Random.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SettingKind {
    pub allocation: AllocationKind,
    pub with_al: bool,
    pub strategy: StrategyKind,
}

impl SettingKind {
    /// Strategy actually used for acquisition.
    pub fn effective_strategy(&self) -> StrategyKind {
        if self.with_al {
            self.strategy
        } else {
            StrategyKind::Random
        }
    }

    /// File-system friendly identifier, e.g. `sma_al` or `monoa-en_noal`.
    pub fn id(&self) -> String {
        let alloc = match &self.allocation {
            AllocationKind::MonoA { source } => format!("monoa-{source}"),
            AllocationKind::Mma => "mma".into(),
            AllocationKind::Sma => "sma".into(),
        };
        format!("{alloc}_{}", if self.with_al { "al" } else { "noal" })
    }
}

/// Budgets and languages of one model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPlan {
    /// Languages whose training data feed this model's seed, validation and pool.
    pub languages: BTreeSet<LanguageTag>,
    /// Languages whose test sets this model is evaluated on.
    pub evaluate: BTreeSet<LanguageTag>,
    pub seed: u64,
    pub budget: u64,
    pub validation: u64,
    /// `budget / (rounds - 1)`, rounded down.
    pub per_round: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub models: Vec<ModelPlan>,
    pub rounds: u32,
}

impl AllocationPlan {
    /// Combined per-round acquisition budget over all models.
    pub fn per_round_total(&self) -> u64 {
        self.models.iter().map(|m| m.per_round).sum()
    }
}

/// Splits `spec` over models according to the allocation setting.
pub fn allocate(allocation: &AllocationKind, spec: &BudgetSpec, languages: &BTreeSet<LanguageTag>) -> Result<AllocationPlan> {
    if languages.is_empty() {
        return Err(ExperimentError::Config("the language set is empty".into()));
    }
    spec.validate().map_err(|e| ExperimentError::Config(e.join("; ")))?;
    let acq_rounds = spec.acquisition_rounds() as u64;
    let plan = |langs: BTreeSet<LanguageTag>, evaluate: BTreeSet<LanguageTag>, s: u64, b: u64, v: u64| ModelPlan {
        languages: langs,
        evaluate,
        seed: s,
        budget: b,
        validation: v,
        per_round: b / acq_rounds,
    };
    let models = match allocation {
        AllocationKind::MonoA { source } => {
            if !languages.contains(source) {
                return Err(ExperimentError::Config(format!("MonoA source {source} is not in the language set")));
            }
            vec![plan(
                BTreeSet::from([source.clone()]),
                languages.clone(),
                spec.seed,
                spec.budget,
                spec.validation,
            )]
        }
        AllocationKind::Mma => {
            let n = languages.len() as u64;
            let (s, b, v) = (spec.seed / n, spec.budget / n, spec.validation / n);
            if s == 0 || b == 0 || v == 0 {
                return Err(ExperimentError::Config(format!(
                    "MMA needs seed, budget and validation of at least n = {n} (got {}, {}, {})",
                    spec.seed, spec.budget, spec.validation
                )));
            }
            if b < acq_rounds {
                return Err(ExperimentError::Config(format!(
                    "MMA per-language budget {b} is smaller than the {acq_rounds} acquisition rounds"
                )));
            }
            languages
                .iter()
                .map(|l| plan(BTreeSet::from([l.clone()]), BTreeSet::from([l.clone()]), s, b, v))
                .collect()
        }
        AllocationKind::Sma => vec![plan(
            languages.clone(),
            languages.clone(),
            spec.seed,
            spec.budget,
            spec.validation,
        )],
    };
    Ok(AllocationPlan {
        models,
        rounds: spec.rounds,
    })
}

/// Evaluation and spend of one training round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: u32,
    /// Test-set metrics per evaluated language.
    pub metrics: MetricReport,
    /// Cost acquired this round per language; empty for round 0.
    pub spend: BTreeMap<LanguageTag, u64>,
    /// Best validation score of each model, in plan order.
    pub validation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RoundResult {
    pub fn total_spend(&self) -> u64 {
        self.spend.values().sum()
    }
}

/// Derives an independent sub-seed; distinct `stream` values give
/// unrelated streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.next_u64()
}
