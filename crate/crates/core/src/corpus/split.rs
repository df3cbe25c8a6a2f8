use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Instance, LanguageTag, Partition, Pool, Result};
use crate::acquisition::first_fit;

/// Seed and validation budgets, in the task's cost unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed_budget: u64,
    pub val_budget: u64,
    pub rng_seed: u64,
}

/// Which languages share a seed/validation draw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Allocation {
    /// Every listed language receives the full seed and validation budgets.
    PerLanguage(BTreeSet<LanguageTag>),
    /// One draw of the budgets over the union of the listed languages.
    Pooled(BTreeSet<LanguageTag>),
}

/// Draws seed (labeled) and validation sets uniformly without replacement,
/// filling each budget first-fit over a seeded shuffle. Everything else goes
/// to the unlabeled partition, including languages absent from `allocation`.
/// The test partition stays empty; see [`Pool::add_test`].
pub fn sample_splits(instances: &[Instance], spec: &SplitSpec, allocation: &Allocation) -> Result<Pool> {
    let mut sorted: Vec<&Instance> = instances.iter().collect();
    sorted.sort_by_key(|i| i.id);

    let groups: Vec<BTreeSet<LanguageTag>> = match allocation {
        Allocation::PerLanguage(langs) => langs.iter().map(|l| BTreeSet::from([l.clone()])).collect(),
        Allocation::Pooled(langs) => vec![langs.clone()],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut pool = Pool::new();
    let mut assigned = BTreeSet::new();
    let need = spec.seed_budget + spec.val_budget;

    for group in &groups {
        let mut members: Vec<&Instance> = sorted.iter().copied().filter(|i| group.contains(&i.language)).collect();
        let available: u64 = members.iter().map(|i| i.cost).sum();
        if available < need {
            let names: Vec<&str> = group.iter().map(LanguageTag::as_str).collect();
            return Err(CorpusError::Config(format!(
                "language {} has {available} units of training data, {need} requested for seed and validation",
                names.join("+")
            )));
        }
        members.shuffle(&mut rng);

        let (seed, _) = first_fit(members.iter().map(|i| (*i, i.cost)), spec.seed_budget);
        let seed_ids: BTreeSet<_> = seed.iter().map(|i| i.id).collect();
        let rest: Vec<&Instance> = members.iter().copied().filter(|i| !seed_ids.contains(&i.id)).collect();
        let (val, _) = first_fit(rest.iter().map(|i| (*i, i.cost)), spec.val_budget);

        for inst in seed {
            pool.insert(Partition::Labeled, inst.clone())?;
            assigned.insert(inst.id);
        }
        for inst in val {
            pool.insert(Partition::Validation, inst.clone())?;
            assigned.insert(inst.id);
        }
    }
    for inst in sorted {
        if !assigned.contains(&inst.id) {
            pool.insert(Partition::Unlabeled, inst.clone())?;
        }
    }
    Ok(pool)
}
