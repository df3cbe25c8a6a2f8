use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::runner::RunContext;
use super::{derive_seed, ExperimentError, Result};
use crate::corpus::{sample_splits, Allocation, Instance, LanguageTag, Partition, SplitSpec};
use crate::models::{train, TaskModel, TrainingConfig};
use crate::par;
use crate::tasks::MetricReport;

/// Upper bounds from training on all available data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullDataReport {
    /// One model on every language's training data.
    pub single_model: MetricReport,
    /// One model per language on that language's training data.
    pub multi_model: MetricReport,
}

fn fit_full(ctx: &RunContext<'_>, languages: &BTreeSet<LanguageTag>, validation: u64, seed: u64) -> Result<TaskModel> {
    let split = SplitSpec {
        seed_budget: 0,
        val_budget: validation,
        rng_seed: seed,
    };
    let pool = sample_splits(&ctx.data.train_for(languages), &split, &Allocation::Pooled(languages.clone()))?;
    let labeled: Vec<&Instance> = pool.instances(Partition::Unlabeled).collect();
    let val: Vec<&Instance> = pool.instances(Partition::Validation).collect();
    let init = TaskModel::new(ctx.data.task, ctx.space, ctx.data.outputs.clone())?;
    let config = TrainingConfig {
        rng_seed: derive_seed(seed, 1 << 32),
        ..ctx.training.clone()
    };
    Ok(train(&init, &labeled, &val, &config)?.model)
}

/// Trains the full-data single-model and per-language baselines. The
/// validation budget is pooled for the single model and split `1/n` per
/// language otherwise. Seed streams follow the run protocol (model `k` uses
/// stream `k`), so both baselines coincide for a single language.
pub fn run_full_data_baselines(ctx: &RunContext<'_>, validation: u64, rng_seed: u64) -> Result<FullDataReport> {
    let languages = ctx.data.languages();
    let n = languages.len() as u64;
    if validation / n.max(1) == 0 {
        return Err(ExperimentError::Config(format!(
            "validation budget {validation} is smaller than the {n} languages"
        )));
    }
    let task = ctx.data.task;
    let evaluate = |model: &TaskModel, langs: &BTreeSet<LanguageTag>, report: &mut MetricReport| -> Result<()> {
        for l in langs {
            let test: Vec<&Instance> = ctx.data.test[l].iter().collect();
            report.insert(l.clone(), model.evaluate(&test, ctx.exec)?);
        }
        Ok(())
    };

    let sm = fit_full(ctx, &languages, validation, derive_seed(rng_seed, 0))?;
    let mut single_model = MetricReport::new(task);
    evaluate(&sm, &languages, &mut single_model)?;

    let langs: Vec<LanguageTag> = languages.iter().cloned().collect();
    let models = par::try_map(ctx.exec, &langs, |l| {
        let k = langs.iter().position(|x| x == l).expect("own language") as u64;
        fit_full(ctx, &BTreeSet::from([l.clone()]), validation / n, derive_seed(rng_seed, k))
    })?;
    let mut multi_model = MetricReport::new(task);
    for (l, m) in langs.iter().zip(&models) {
        evaluate(m, &BTreeSet::from([l.clone()]), &mut multi_model)?;
    }
    Ok(FullDataReport {
        single_model,
        multi_model,
    })
}
