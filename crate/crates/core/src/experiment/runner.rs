use std::collections::BTreeMap;

use super::{allocate, derive_seed, AllocationPlan, BudgetSpec, ModelPlan, Result, RoundResult, SettingKind};
use crate::acquisition::{score_instances, select_batch, AcquisitionRecord};
use crate::corpus::{Allocation, Instance, LanguageTag, Partition, Pool, SplitSpec};
use crate::experiment::ExperimentData;
use crate::features::FeatureSpace;
use crate::models::{train, TaskModel, TrainingConfig};
use crate::par::{self, Execution};
use crate::tasks::MetricReport;

/// Everything a run needs besides the setting and the seed.
#[derive(Clone, Debug)]
pub struct RunContext<'a> {
    pub data: &'a ExperimentData,
    pub space: FeatureSpace,
    pub training: TrainingConfig,
    pub exec: Execution,
}

/// Results of one replicate of one setting.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub plan: AllocationPlan,
    pub rounds: Vec<RoundResult>,
    pub acquisitions: Vec<AcquisitionRecord>,
    /// Seed plus unlabeled-pool cost per language at round 0, summed over
    /// models.
    pub composition: BTreeMap<LanguageTag, u64>,
}

struct ModelState {
    plan: ModelPlan,
    seed: u64,
    pool: Pool,
    model: Option<TaskModel>,
    validation: f64,
}

impl ModelState {
    fn fit(&mut self, ctx: &RunContext<'_>, round: u32) -> Result<()> {
        let labeled: Vec<&Instance> = self.pool.instances(Partition::Labeled).collect();
        let validation: Vec<&Instance> = self.pool.instances(Partition::Validation).collect();
        let config = TrainingConfig {
            rng_seed: derive_seed(self.seed, (1 << 32) | round as u64),
            ..ctx.training.clone()
        };
        // Retrained from scratch every round.
        let init = TaskModel::new(ctx.data.task, ctx.space, ctx.data.outputs.clone())?;
        let outcome = train(&init, &labeled, &validation, &config)?;
        self.validation = outcome.validation_score;
        self.model = Some(outcome.model);
        Ok(())
    }

    fn evaluate(&self, ctx: &RunContext<'_>) -> Result<Vec<(LanguageTag, crate::tasks::MetricCounts)>> {
        let model = self.model.as_ref().expect("fitted before evaluation");
        let mut out = Vec::new();
        for lang in &self.plan.evaluate {
            let test: Vec<&Instance> = ctx.data.test[lang].iter().collect();
            out.push((lang.clone(), model.evaluate(&test, ctx.exec)?));
        }
        Ok(out)
    }

    /// Scores the unlabeled pool, selects one round's batch and moves it to
    /// the labeled partition.
    fn acquire(&mut self, ctx: &RunContext<'_>, setting: &SettingKind, round: u32) -> Result<(Vec<AcquisitionRecord>, Option<String>)> {
        let model = self.model.as_ref().expect("fitted before acquisition");
        let strategy = setting.effective_strategy();
        let candidates: Vec<&Instance> = self.pool.instances(Partition::Unlabeled).collect();
        let scores = score_instances(model, &candidates, strategy, self.seed, round, ctx.exec)?;
        let selection = select_batch(&scores, self.plan.per_round);
        let by_id: BTreeMap<_, _> = scores.iter().map(|s| (s.instance_id, s)).collect();
        let mut records = Vec::with_capacity(selection.ids.len());
        for id in &selection.ids {
            self.pool.acquire(*id)?;
            let s = by_id[id];
            records.push(AcquisitionRecord {
                round,
                instance_id: *id,
                language: s.language.clone(),
                cost: s.cost,
                score: s.score,
                strategy,
            });
        }
        let warning = (selection.spent < self.plan.per_round && self.pool.len(Partition::Unlabeled) == 0).then(|| {
            let langs: Vec<&str> = self.plan.languages.iter().map(LanguageTag::as_str).collect();
            let msg = format!(
                "round {round}: unlabeled pool of {} exhausted, spent {} of {}",
                langs.join("+"),
                selection.spent,
                self.plan.per_round
            );
            log::warn!("{msg}");
            msg
        });
        Ok((records, warning))
    }
}

/// Runs one replicate of `setting`: a seed round followed by
/// `spec.rounds - 1` acquisition rounds, retraining from scratch and
/// evaluating on the test sets after every round.
pub fn run_rounds(ctx: &RunContext<'_>, setting: &SettingKind, spec: &BudgetSpec, rng_seed: u64) -> Result<RunOutput> {
    let plan = allocate(&setting.allocation, spec, &ctx.data.languages())?;
    if spec.unit != ctx.data.task.budget_unit() {
        return Err(super::ExperimentError::Config(format!(
            "budget unit {:?} does not match task {}",
            spec.unit, ctx.data.task
        )));
    }

    let mut states = Vec::with_capacity(plan.models.len());
    let mut composition = BTreeMap::new();
    for (k, mp) in plan.models.iter().enumerate() {
        let seed = derive_seed(rng_seed, k as u64);
        let split = SplitSpec {
            seed_budget: mp.seed,
            val_budget: mp.validation,
            rng_seed: seed,
        };
        let pool = crate::corpus::sample_splits(&ctx.data.train_for(&mp.languages), &split, &Allocation::Pooled(mp.languages.clone()))?;
        for part in [Partition::Labeled, Partition::Unlabeled] {
            for (lang, c) in pool.cost_by_language(part) {
                *composition.entry(lang).or_insert(0) += c;
            }
        }
        states.push(ModelState {
            plan: mp.clone(),
            seed,
            pool,
            model: None,
            validation: f64::NAN,
        });
    }

    let mut rounds = Vec::with_capacity(spec.rounds as usize);
    let mut acquisitions = Vec::new();
    for round in 0..spec.rounds {
        // Models are independent: acquire, retrain and evaluate each in turn.
        let step = |mut st: ModelState| -> Result<(ModelState, Vec<AcquisitionRecord>, Option<String>, Vec<_>)> {
            let (records, warning) = if round == 0 {
                (Vec::new(), None)
            } else {
                st.acquire(ctx, setting, round)?
            };
            st.fit(ctx, round)?;
            let metrics = st.evaluate(ctx)?;
            Ok((st, records, warning, metrics))
        };
        let stepped = par::try_map_owned(ctx.exec, std::mem::take(&mut states), step)?;

        let mut report = MetricReport::new(ctx.data.task);
        let mut spend = BTreeMap::new();
        let mut validation = Vec::with_capacity(stepped.len());
        let mut warnings = Vec::new();
        for (st, records, warning, metrics) in stepped {
            for r in &records {
                *spend.entry(r.language.clone()).or_insert(0) += r.cost;
            }
            acquisitions.extend(records);
            warnings.extend(warning);
            for (lang, counts) in metrics {
                report.insert(lang, counts);
            }
            validation.push(st.validation);
            states.push(st);
        }
        log::info!(
            "{} round {round}: spent {}, macro {} {:.4}",
            setting.id(),
            spend.values().sum::<u64>(),
            ctx.data.task.primary_metric(),
            report.macro_mean(ctx.data.task.primary_metric()).unwrap_or(f64::NAN)
        );
        rounds.push(RoundResult {
            round,
            metrics: report,
            spend,
            validation,
            warnings,
        });
    }
    Ok(RunOutput {
        plan,
        rounds,
        acquisitions,
        composition,
    })
}

/// Runs `replicates` independent replicates with seeds `base_seed + k`.
pub fn run_cell(
    ctx: &RunContext<'_>,
    setting: &SettingKind,
    spec: &BudgetSpec,
    base_seed: u64,
    replicates: usize,
) -> Result<Vec<RunOutput>> {
    let seeds: Vec<u64> = (0..replicates as u64).map(|k| base_seed.wrapping_add(k)).collect();
    par::try_map(ctx.exec, &seeds, |&seed| run_rounds(ctx, setting, spec, seed))
}
