//! Experiment configuration files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use mlal_core::experiment::{allocate, AllocationKind, BudgetSpec, DataFiles, SettingKind};
use mlal_core::features::FeatureSpace;
use mlal_core::models::TrainingConfig;
use mlal_core::{LanguageTag, StrategyKind, TaskKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_rounds() -> u32 {
    4
}

fn default_replicates() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub seed: u64,
    pub budget: u64,
    pub validation: u64,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
}

impl BudgetConfig {
    pub fn spec(&self, task: TaskKind) -> BudgetSpec {
        BudgetSpec {
            seed: self.seed,
            budget: self.budget,
            validation: self.validation,
            rounds: self.rounds,
            unit: task.budget_unit(),
        }
    }
}

/// Optimiser settings; the per-round shuffling seed is derived from the
/// experiment seed and not configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rates: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSection {
            learning_rates: t.learning_rates,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            l2: t.l2,
        }
    }
}

impl TrainingSection {
    pub fn to_config(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rates: self.learning_rates.clone(),
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            l2: self.l2,
            rng_seed: 0,
        }
    }
}

/// An allocation setting; every setting runs once with and once without
/// active learning.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub allocation: AllocationKind,
    /// Acquisition strategy for the active-learning cell; defaults to the
    /// task's uncertainty strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
}

impl SettingSpec {
    pub fn cells(&self, task: TaskKind) -> [SettingKind; 2] {
        let strategy = self.strategy.unwrap_or_else(|| StrategyKind::default_for(task));
        [true, false].map(|with_al| SettingKind {
            allocation: self.allocation.clone(),
            with_al,
            strategy,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    /// Train and test files per language; relative paths are resolved
    /// against the configuration file's directory.
    pub languages: BTreeMap<LanguageTag, DataFiles>,
    pub settings: Vec<SettingSpec>,
    pub budget: BudgetConfig,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub features: FeatureSpace,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Replicate `k` uses seed `seed + k`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Sentence-length cap (token tasks) or text truncation (classification).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<usize>,
    /// Also train the full-data single- and per-language models.
    #[serde(default)]
    pub full_data_baselines: bool,
}

impl ExperimentConfig {
    /// Every (setting × with/without AL) cell in configuration order.
    pub fn cells(&self) -> Vec<SettingKind> {
        self.settings.iter().flat_map(|s| s.cells(self.task)).collect()
    }

    pub fn budget_spec(&self) -> BudgetSpec {
        self.budget.spec(self.task)
    }

    pub fn language_set(&self) -> BTreeSet<LanguageTag> {
        self.languages.keys().cloned().collect()
    }

    /// Parses JSON, resolves paths against `base`, fills defaults and checks
    /// every constraint, reporting all violations together.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
        config.resolve(base);
        let errors = config.violations();
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(CliError::Validation(errors))
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for files in self.languages.values_mut() {
            fix(&mut files.train);
            fix(&mut files.test);
        }
        if let Some(out) = self.output.as_mut() {
            fix(out);
        }
        for s in &mut self.settings {
            s.strategy.get_or_insert(StrategyKind::default_for(self.task));
        }
    }

    /// All constraint violations, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.languages.is_empty() {
            errs.push("languages: at least one language is required".to_string());
        }
        for (lang, files) in &self.languages {
            for (split, path) in [("train", &files.train), ("test", &files.test)] {
                if !path.is_file() {
                    errs.push(format!("languages.{lang}.{split}: file {} does not exist", path.display()));
                }
            }
        }
        let spec = self.budget_spec();
        if let Err(e) = spec.validate() {
            errs.extend(e);
        }
        if let Err(e) = self.training.to_config().validate() {
            errs.extend(e);
        }
        if let Err(e) = self.features.validate() {
            errs.push(format!("features: {e}"));
        }
        if self.replicates == 0 {
            errs.push("replicates must be at least 1".to_string());
        }
        if self.max_length == Some(0) {
            errs.push("max_length must be positive".to_string());
        }
        if self.settings.is_empty() {
            errs.push("settings: at least one setting is required".to_string());
        }
        let languages = self.language_set();
        let mut seen = BTreeSet::new();
        for (i, s) in self.settings.iter().enumerate() {
            let strategy = s.strategy.unwrap_or_else(|| StrategyKind::default_for(self.task));
            if !strategy.is_compatible(self.task) {
                errs.push(format!("settings[{i}]: strategy {strategy} does not apply to {}", self.task));
            }
            if strategy == StrategyKind::Random {
                errs.push(format!(
                    "settings[{i}]: strategy random duplicates the without-AL cell; choose an uncertainty strategy"
                ));
            }
            if !seen.insert(s.allocation.clone()) {
                errs.push(format!("settings[{i}]: allocation {} listed twice", s.allocation));
            }
            if !languages.is_empty() && spec.validate().is_ok() {
                if let Err(e) = allocate(&s.allocation, &spec, &languages) {
                    errs.push(format!("settings[{i}] ({}): {e}", s.allocation));
                }
            }
        }
        errs
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Reads and validates a configuration file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ExperimentConfig::from_json(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_data(dir: &Path) {
        let tsv = "label\tlanguage\ttext\npos\ten\tgood\nneg\ten\tbad\n";
        std::fs::write(dir.join("en.train.tsv"), tsv).unwrap();
        std::fs::write(dir.join("en.test.tsv"), tsv).unwrap();
    }

    const MINIMAL: &str = r#"{
        "task": "classification",
        "languages": {"en": {"train": "en.train.tsv", "test": "en.test.tsv"}},
        "settings": [{"allocation": {"kind": "sma"}}],
        "budget": {"seed": 1, "budget": 3, "validation": 1}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_data(dir.path());
        let c = ExperimentConfig::from_json(MINIMAL, dir.path()).unwrap();
        assert_eq!(c.budget.rounds, 4);
        assert_eq!(c.training.patience, 25);
        assert_eq!(c.training.max_epochs, 75);
        assert_eq!(c.replicates, 1);
        assert_eq!(c.settings[0].strategy, Some(StrategyKind::Lc));
        assert_eq!(c.cells().len(), 2);
        assert!(c.languages[&LanguageTag::new("en").unwrap()].train.is_absolute() || dir.path().is_relative());
    }

    #[test]
    fn unknown_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_data(dir.path());
        let text = MINIMAL.replacen('{', r#"{"foo": 1,"#, 1);
        let Err(CliError::Validation(errs)) = ExperimentConfig::from_json(&text, dir.path()) else {
            panic!("expected validation error")
        };
        assert!(errs[0].contains("foo"), "{errs:?}");
    }

    #[test]
    fn violations_are_exhaustive() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{
            "task": "sequence_tagging",
            "languages": {"en": {"train": "missing.conll", "test": "missing2.conll"}},
            "settings": [{"allocation": {"kind": "sma"}, "strategy": "lc"}],
            "budget": {"seed": 0, "budget": 3, "validation": 1},
            "replicates": 0
        }"#;
        let Err(CliError::Validation(errs)) = ExperimentConfig::from_json(text, dir.path()) else {
            panic!("expected validation error")
        };
        let all = errs.join("\n");
        for needle in ["train", "test", "budget.seed", "replicates", "strategy lc"] {
            assert!(all.contains(needle), "missing {needle} in {all}");
        }
    }

    #[test]
    fn mma_budget_below_language_count() {
        let dir = tempfile::tempdir().unwrap();
        for l in ["en", "de", "fr"] {
            let tsv = format!("label\tlanguage\ttext\npos\t{l}\tgood\n");
            std::fs::write(dir.path().join(format!("{l}.tsv")), tsv).unwrap();
        }
        let text = r#"{
            "task": "classification",
            "languages": {
                "en": {"train": "en.tsv", "test": "en.tsv"},
                "de": {"train": "de.tsv", "test": "de.tsv"},
                "fr": {"train": "fr.tsv", "test": "fr.tsv"}
            },
            "settings": [{"allocation": {"kind": "mma"}}],
            "budget": {"seed": 3, "budget": 2, "validation": 3, "rounds": 2}
        }"#;
        let Err(CliError::Validation(errs)) = ExperimentConfig::from_json(text, dir.path()) else {
            panic!("expected validation error")
        };
        assert!(errs.iter().any(|e| e.contains("MMA")), "{errs:?}");
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_data(dir.path());
        let c = ExperimentConfig::from_json(MINIMAL, dir.path()).unwrap();
        let again = ExperimentConfig::from_json(&c.to_json(), Path::new("/nonexistent")).unwrap();
        assert_eq!(c, again);
    }
}
