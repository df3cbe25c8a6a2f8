use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Instance, InstanceId, LanguageTag, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Labeled,
    Unlabeled,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 4] = [Partition::Labeled, Partition::Unlabeled, Partition::Validation, Partition::Test];
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Labeled => "labeled",
            Partition::Unlabeled => "unlabeled",
            Partition::Validation => "validation",
            Partition::Test => "test",
        })
    }
}

/// Instances partitioned into labeled (seed + acquired), unlabeled,
/// validation and test sets, with a per-language index over each.
///
/// Every id lives in exactly one partition.
#[derive(Clone, Debug, Default)]
pub struct Pool {
    parts: [BTreeMap<InstanceId, Instance>; 4],
    by_language: [BTreeMap<LanguageTag, BTreeSet<InstanceId>>; 4],
    location: BTreeMap<InstanceId, Partition>,
}

fn slot(p: Partition) -> usize {
    p as usize
}

impl Pool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, partition: Partition, instance: Instance) -> Result<()> {
        if self.location.contains_key(&instance.id) {
            return Err(CorpusError::DuplicateId(instance.id));
        }
        self.location.insert(instance.id, partition);
        self.by_language[slot(partition)]
            .entry(instance.language.clone())
            .or_default()
            .insert(instance.id);
        self.parts[slot(partition)].insert(instance.id, instance);
        Ok(())
    }

    /// Adds a separately supplied test set.
    pub fn add_test(&mut self, instances: impl IntoIterator<Item = Instance>) -> Result<()> {
        for inst in instances {
            self.insert(Partition::Test, inst)?;
        }
        Ok(())
    }

    /// Moves `id` between partitions, keeping its id and cost.
    pub fn relocate(&mut self, id: InstanceId, from: Partition, to: Partition) -> Result<()> {
        let inst = self.parts[slot(from)]
            .remove(&id)
            .ok_or(CorpusError::NotInPartition(id, from))?;
        if let Some(ids) = self.by_language[slot(from)].get_mut(&inst.language) {
            ids.remove(&id);
            if ids.is_empty() {
                self.by_language[slot(from)].remove(&inst.language);
            }
        }
        self.location.remove(&id);
        self.insert(to, inst)
    }

    /// Reveals the annotation of an unlabeled instance by moving it to the
    /// labeled partition.
    pub fn acquire(&mut self, id: InstanceId) -> Result<()> {
        self.relocate(id, Partition::Unlabeled, Partition::Labeled)
    }

    pub fn get(&self, partition: Partition, id: InstanceId) -> Option<&Instance> {
        self.parts[slot(partition)].get(&id)
    }

    pub fn partition_of(&self, id: InstanceId) -> Option<Partition> {
        self.location.get(&id).copied()
    }

    pub fn partition(&self, partition: Partition) -> &BTreeMap<InstanceId, Instance> {
        &self.parts[slot(partition)]
    }

    /// Instances of a partition in ascending id order.
    pub fn instances(&self, partition: Partition) -> impl Iterator<Item = &Instance> {
        self.parts[slot(partition)].values()
    }

    pub fn len(&self, partition: Partition) -> usize {
        self.parts[slot(partition)].len()
    }

    pub fn is_empty(&self) -> bool {
        self.location.is_empty()
    }

    pub fn ids_by_language(&self, partition: Partition, language: &LanguageTag) -> Option<&BTreeSet<InstanceId>> {
        self.by_language[slot(partition)].get(language)
    }

    pub fn languages(&self, partition: Partition) -> impl Iterator<Item = &LanguageTag> {
        self.by_language[slot(partition)].keys()
    }

    /// Total cost per language within a partition.
    pub fn cost_by_language(&self, partition: Partition) -> BTreeMap<LanguageTag, u64> {
        let mut out = BTreeMap::new();
        for inst in self.instances(partition) {
            *out.entry(inst.language.clone()).or_insert(0) += inst.cost;
        }
        out
    }

    pub fn total_cost(&self, partition: Partition) -> u64 {
        self.instances(partition).map(|i| i.cost).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassificationText, Payload};

    fn inst(id: u64, lang: &str) -> Instance {
        Instance::new(
            InstanceId(id),
            LanguageTag::new(lang).unwrap(),
            Payload::Classification(ClassificationText {
                text: format!("t{id}"),
                label: Some("pos".into()),
            }),
        )
    }

    #[test]
    fn acquire_moves_and_preserves() {
        let mut pool = Pool::new();
        pool.insert(Partition::Unlabeled, inst(3, "en")).unwrap();
        pool.insert(Partition::Labeled, inst(1, "es")).unwrap();
        pool.acquire(InstanceId(3)).unwrap();
        assert_eq!(pool.partition_of(InstanceId(3)), Some(Partition::Labeled));
        assert_eq!(pool.len(Partition::Unlabeled), 0);
        assert_eq!(pool.get(Partition::Labeled, InstanceId(3)).unwrap().cost, 1);
        assert!(pool.ids_by_language(Partition::Unlabeled, &LanguageTag::new("en").unwrap()).is_none());
        assert_eq!(pool.languages(Partition::Labeled).count(), 2);
        assert!(pool.acquire(InstanceId(3)).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut pool = Pool::new();
        pool.insert(Partition::Unlabeled, inst(0, "en")).unwrap();
        assert!(matches!(pool.add_test([inst(0, "en")]), Err(CorpusError::DuplicateId(_))));
    }
}
