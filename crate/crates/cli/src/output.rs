//! Result-directory layout and atomic file writes.
//!
//! ```text
//! <out>/manifest.json            config, cell status, timestamp
//! <out>/results.jsonl            every cell's rounds, in config order
//! <out>/summary.csv              one row per setting
//! <out>/cells/<id>/rounds.jsonl  one CellRecord per line
//! <out>/cells/<id>/acquisitions_rep<k>.csv
//! <out>/cells/<id>/composition.json
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use mlal_core::acquisition::{read_acquisition_log, AcquisitionRecord};
use mlal_core::experiment::AllocationKind;
use mlal_core::{LanguageTag, RoundResult, SettingKind, StrategyKind};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const BASELINES: &str = "baselines.json";
pub const PLOT: &str = "plot.csv";
pub const AGGREGATE: &str = "aggregate.csv";
pub const CURRICULUM: &str = "curriculum.csv";

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pending,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub id: String,
    pub setting: SettingKind,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run bookkeeping; the only file that carries a timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub updated: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellEntry>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Manifest {
            updated: String::new(),
            config: config.clone(),
            cells: config
                .cells()
                .into_iter()
                .map(|setting| CellEntry {
                    id: setting.id(),
                    setting,
                    status: CellStatus::Pending,
                    error: None,
                })
                .collect(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        serde_json::from_str(&read(&path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    pub fn save(&mut self, dir: &Path) -> Result<(), CliError> {
        self.updated = chrono::Utc::now().to_rfc3339();
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(MANIFEST), text.as_bytes())
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Complete)
    }
}

pub fn cell_dir(out: &Path, id: &str) -> PathBuf {
    out.join("cells").join(id)
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub setting: String,
    pub allocation: AllocationKind,
    pub with_al: bool,
    pub strategy: StrategyKind,
    pub replicate: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub result: RoundResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateComposition {
    pub replicate: usize,
    pub seed: u64,
    /// Labeled plus unlabeled cost per language at round 0.
    pub composition: BTreeMap<LanguageTag, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellComposition {
    pub per_round_budget: u64,
    pub acquisition_rounds: u32,
    pub replicates: Vec<ReplicateComposition>,
}

/// Everything persisted for one completed cell.
pub struct CellResults {
    pub entry: CellEntry,
    /// Round results grouped by replicate.
    pub replicates: Vec<Vec<RoundResult>>,
    pub composition: CellComposition,
    pub acquisitions: Vec<Vec<AcquisitionRecord>>,
}

pub fn acquisitions_file(dir: &Path, replicate: usize) -> PathBuf {
    dir.join(format!("acquisitions_rep{replicate}.csv"))
}

pub fn parse_records(text: &str, origin: &Path) -> Result<Vec<CellRecord>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Runtime(format!("{}:{}: {e}", origin.display(), i + 1))))
        .collect()
}

impl CellResults {
    pub fn load(out: &Path, entry: &CellEntry) -> Result<Self, CliError> {
        let dir = cell_dir(out, &entry.id);
        let rounds_path = dir.join("rounds.jsonl");
        let records = parse_records(&read(&rounds_path)?, &rounds_path)?;
        let comp_path = dir.join("composition.json");
        let composition: CellComposition =
            serde_json::from_str(&read(&comp_path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", comp_path.display())))?;
        let n = composition.replicates.len();
        let mut replicates = vec![Vec::new(); n];
        for rec in records {
            let slot = replicates
                .get_mut(rec.replicate)
                .ok_or_else(|| CliError::Runtime(format!("{}: replicate {} out of range", rounds_path.display(), rec.replicate)))?;
            slot.push(rec.result);
        }
        let acquisitions = (0..n)
            .map(|k| {
                let path = acquisitions_file(&dir, k);
                let f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
                Ok(read_acquisition_log(f)?)
            })
            .collect::<Result<_, CliError>>()?;
        Ok(CellResults {
            entry: entry.clone(),
            replicates,
            composition,
            acquisitions,
        })
    }
}
