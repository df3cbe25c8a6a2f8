use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mlal_core::acquisition::write_acquisition_log;
use mlal_core::experiment::{aggregate, curriculum, run_cell, run_full_data_baselines, AllocationKind, ExperimentData, RunContext};
use mlal_core::par::Execution;
use mlal_core::synth::{self, SynthConfig};
use mlal_core::{RoundResult, SettingKind, StrategyKind, TaskKind};
use serde::{Deserialize, Serialize};

use crate::config::{validate_config, BudgetConfig, ExperimentConfig, SettingSpec};
use crate::output::*;
use crate::CliError;

/// Options shared by `run` invocations.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `1` runs everything sequentially.
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn cmd_validate(config: &Path) -> Result<ExperimentConfig, CliError> {
    validate_config(config)
}

/// Applies command-line overrides and returns the output directory.
fn resolve_run(config: &mut ExperimentConfig, opts: &RunOptions) -> Result<PathBuf, CliError> {
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(out) = &opts.out {
        config.output = Some(out.clone());
    }
    config
        .output
        .clone()
        .ok_or_else(|| CliError::Validation(vec!["output: no output directory in the config and no --out given".into()]))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce(Execution) -> T + Send) -> Result<T, CliError> {
    let jobs = jobs.unwrap_or(0);
    if jobs == 1 {
        return Ok(f(Execution::Sequential));
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start {jobs} worker threads: {e}")))?;
        Ok(pool.install(|| f(Execution::Parallel)))
    }
    #[cfg(not(feature = "parallel"))]
    Ok(f(Execution::Sequential))
}

/// Runs every incomplete cell of the configuration, resuming from an
/// existing manifest in the output directory.
pub fn cmd_run(config: &Path, opts: &RunOptions) -> Result<PathBuf, CliError> {
    let mut config = validate_config(config)?;
    let out = resolve_run(&mut config, opts)?;

    let mut manifest = if out.join(MANIFEST).exists() {
        let prev = Manifest::load(&out)?;
        if prev.config != config {
            return Err(CliError::Runtime(format!(
                "{} holds results of a different configuration; choose another output directory",
                out.display()
            )));
        }
        prev
    } else {
        Manifest::new(&config)
    };
    manifest.save(&out)?;

    let data = ExperimentData::load(config.task, &config.languages, config.max_length)?;
    let spec = config.budget_spec();
    let mut training = config.training.to_config();
    training.rng_seed = config.seed;

    for i in 0..manifest.cells.len() {
        let entry = &manifest.cells[i];
        if entry.status == CellStatus::Complete && cell_dir(&out, &entry.id).join("rounds.jsonl").exists() {
            log::info!("skipping complete cell {}", entry.id);
            continue;
        }
        let setting = entry.setting.clone();
        log::info!("running cell {}", entry.id);
        let outcome = with_jobs(opts.jobs, |exec| {
            let ctx = RunContext {
                data: &data,
                space: config.features,
                training: training.clone(),
                exec,
            };
            run_cell(&ctx, &setting, &spec, config.seed, config.replicates)
        })
        .and_then(|r| r.map_err(CliError::from))
        .and_then(|outputs| write_cell(&out, &setting, config.seed, &outputs));
        let entry = &mut manifest.cells[i];
        match outcome {
            Ok(()) => {
                entry.status = CellStatus::Complete;
                entry.error = None;
                manifest.save(&out)?;
            }
            Err(e) => {
                entry.status = CellStatus::Failed;
                entry.error = Some(e.to_string());
                let id = entry.id.clone();
                manifest.save(&out)?;
                return Err(CliError::Runtime(format!("cell {id} failed: {e}")));
            }
        }
    }

    let cells = load_complete(&out, &manifest)?;
    let mut results = String::new();
    for c in &manifest.cells {
        results.push_str(&read(&cell_dir(&out, &c.id).join("rounds.jsonl"))?);
    }
    write_atomic(&out.join(RESULTS), results.as_bytes())?;
    write_atomic(&out.join(SUMMARY), &summary_csv(config.task, &cells)?)?;

    if config.full_data_baselines && !out.join(BASELINES).exists() {
        let report = with_jobs(opts.jobs, |exec| {
            let ctx = RunContext {
                data: &data,
                space: config.features,
                training: training.clone(),
                exec,
            };
            run_full_data_baselines(&ctx, spec.validation, config.seed)
        })??;
        write_atomic(&out.join(BASELINES), serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(out)
}

fn write_cell(out: &Path, setting: &SettingKind, base_seed: u64, outputs: &[mlal_core::experiment::RunOutput]) -> Result<(), CliError> {
    let dir = cell_dir(out, &setting.id());
    let mut lines = String::new();
    let mut replicates = Vec::new();
    for (k, o) in outputs.iter().enumerate() {
        let seed = base_seed.wrapping_add(k as u64);
        for r in &o.rounds {
            let rec = CellRecord {
                setting: setting.id(),
                allocation: setting.allocation.clone(),
                with_al: setting.with_al,
                strategy: setting.effective_strategy(),
                replicate: k,
                seed,
                result: r.clone(),
            };
            lines.push_str(&serde_json::to_string(&rec)?);
            lines.push('\n');
        }
        let mut log = Vec::new();
        write_acquisition_log(&o.acquisitions, &mut log)?;
        write_atomic(&acquisitions_file(&dir, k), &log)?;
        replicates.push(ReplicateComposition {
            replicate: k,
            seed,
            composition: o.composition.clone(),
        });
    }
    let first = outputs.first().ok_or_else(|| CliError::Runtime("no replicates".into()))?;
    let comp = CellComposition {
        per_round_budget: first.plan.per_round_total(),
        acquisition_rounds: first.plan.rounds.saturating_sub(1),
        replicates,
    };
    write_atomic(&dir.join("composition.json"), serde_json::to_string_pretty(&comp)?.as_bytes())?;
    // Written last: its presence marks the cell's files as complete.
    write_atomic(&dir.join("rounds.jsonl"), lines.as_bytes())
}

fn load_complete(out: &Path, manifest: &Manifest) -> Result<Vec<CellResults>, CliError> {
    manifest
        .cells
        .iter()
        .filter(|c| c.status == CellStatus::Complete)
        .map(|c| CellResults::load(out, c))
        .collect()
}

fn replicate_slices(r: &CellResults) -> impl Iterator<Item = &[RoundResult]> {
    r.replicates.iter().map(Vec::as_slice)
}

/// Table-shaped summary: one row per allocation, `<metric>_<al|noal>_<mean|std>`
/// columns, each the replicate mean of the metric averaged over rounds and
/// languages.
fn summary_csv(task: TaskKind, cells: &[CellResults]) -> Result<Vec<u8>, CliError> {
    let mut rows: Vec<(AllocationKind, BTreeMap<String, f64>)> = Vec::new();
    for c in cells {
        let alloc = &c.entry.setting.allocation;
        let idx = match rows.iter().position(|(a, _)| a == alloc) {
            Some(i) => i,
            None => {
                rows.push((alloc.clone(), BTreeMap::new()));
                rows.len() - 1
            }
        };
        let flag = if c.entry.setting.with_al { "al" } else { "noal" };
        for metric in task.metric_names() {
            let agg = aggregate(replicate_slices(c), metric)?;
            rows[idx].1.insert(format!("{metric}_{flag}_mean"), agg.mean);
            rows[idx].1.insert(format!("{metric}_{flag}_std"), agg.stddev);
        }
    }
    let mut columns = Vec::new();
    for metric in task.metric_names() {
        for flag in ["al", "noal"] {
            for stat in ["mean", "std"] {
                columns.push(format!("{metric}_{flag}_{stat}"));
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["setting".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for (alloc, vals) in &rows {
        let mut rec = vec![alloc.to_string()];
        rec.extend(columns.iter().map(|c| vals.get(c).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub setting: String,
    pub al_flag: bool,
    pub round: u32,
    pub language: String,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub setting: String,
    pub al_flag: bool,
    pub metric: String,
    pub replicates: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRow {
    pub setting: String,
    pub al_flag: bool,
    pub replicate: usize,
    pub round: u32,
    pub language: String,
    pub alpha: f64,
    pub acquired: u64,
    pub cumulative: u64,
    pub relative: f64,
    /// `Σ_j α_j (1 + r_j) − cumulative / (round · b)` for the whole round.
    pub identity_residual: f64,
}

pub const CURRICULUM_TOLERANCE: f64 = 1e-9;

fn load_results(results: &Path) -> Result<(Manifest, Vec<CellResults>), CliError> {
    if !results.join(MANIFEST).exists() {
        return Err(CliError::Runtime(format!("{} contains no results (missing {MANIFEST})", results.display())));
    }
    let manifest = Manifest::load(results)?;
    let cells = load_complete(results, &manifest)?;
    if cells.is_empty() {
        return Err(CliError::Runtime(format!("{} has no completed cells", results.display())));
    }
    for c in manifest.cells.iter().filter(|c| c.status != CellStatus::Complete) {
        log::warn!("cell {} is {:?}; left out of the report", c.id, c.status);
    }
    Ok((manifest, cells))
}

fn allocation_label(s: &SettingKind) -> String {
    s.allocation.to_string()
}

pub fn plot_rows(task: TaskKind, cells: &[CellResults]) -> Result<Vec<PlotRow>, CliError> {
    let mut rows = Vec::new();
    for c in cells {
        let Some(first) = c.replicates.first() else { continue };
        for (ri, round) in first.iter().enumerate() {
            for lang in round.metrics.languages.keys() {
                // One (round, language) slice per replicate, so the numbers
                // come from the same fold as every other aggregate.
                let slices: Vec<Vec<RoundResult>> = c
                    .replicates
                    .iter()
                    .map(|rep| {
                        let mut r = rep[ri].clone();
                        r.metrics.languages.retain(|l, _| l == lang);
                        vec![r]
                    })
                    .collect();
                for metric in task.metric_names() {
                    let agg = aggregate(slices.iter().map(Vec::as_slice), metric)?;
                    rows.push(PlotRow {
                        setting: allocation_label(&c.entry.setting),
                        al_flag: c.entry.setting.with_al,
                        round: round.round,
                        language: lang.to_string(),
                        metric: metric.to_string(),
                        mean: agg.mean,
                        stddev: agg.stddev,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn aggregate_rows(task: TaskKind, cells: &[CellResults]) -> Result<Vec<AggregateRow>, CliError> {
    let mut rows = Vec::new();
    for c in cells {
        for metric in task.metric_names() {
            let agg = aggregate(replicate_slices(c), metric)?;
            rows.push(AggregateRow {
                setting: allocation_label(&c.entry.setting),
                al_flag: c.entry.setting.with_al,
                metric: metric.to_string(),
                replicates: agg.per_replicate.len(),
                mean: agg.mean,
                stddev: agg.stddev,
            });
        }
    }
    Ok(rows)
}

/// Curriculum of every replicate of every cell; fails if the identity does
/// not hold.
pub fn curriculum_rows(cells: &[CellResults]) -> Result<Vec<CurriculumRow>, CliError> {
    let mut rows = Vec::new();
    for c in cells {
        for (k, rep) in c.composition.replicates.iter().enumerate() {
            let report = curriculum(
                &c.acquisitions[k],
                &rep.composition,
                c.composition.per_round_budget,
                c.composition.acquisition_rounds,
            )?;
            for round in &report.rounds {
                let residual = report.identity_residual(round);
                if residual.abs() > CURRICULUM_TOLERANCE || !residual.is_finite() {
                    return Err(CliError::Runtime(format!(
                        "curriculum identity violated for {} replicate {k} round {}: residual {residual:e}",
                        c.entry.id, round.round
                    )));
                }
                for (lang, &alpha) in &report.alpha {
                    rows.push(CurriculumRow {
                        setting: allocation_label(&c.entry.setting),
                        al_flag: c.entry.setting.with_al,
                        replicate: k,
                        round: round.round,
                        language: lang.to_string(),
                        alpha,
                        acquired: round.acquired[lang],
                        cumulative: round.cumulative[lang],
                        relative: round.relative[lang],
                        identity_residual: residual,
                    });
                }
            }
        }
    }
    Ok(rows)
}

const PLOT_HEADER: &[&str] = &["setting", "al_flag", "round", "language", "metric", "mean", "stddev"];
const AGGREGATE_HEADER: &[&str] = &["setting", "al_flag", "metric", "replicates", "mean", "stddev"];
const CURRICULUM_HEADER: &[&str] = &[
    "setting",
    "al_flag",
    "replicate",
    "round",
    "language",
    "alpha",
    "acquired",
    "cumulative",
    "relative",
    "identity_residual",
];

/// Writes plot, aggregate and curriculum CSVs for a results directory into
/// `out` (default: the results directory).
pub fn cmd_report(results: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let (manifest, cells) = load_results(results)?;
    let out = out.unwrap_or(results);
    let task = manifest.config.task;
    let files = [
        (out.join(PLOT), csv_bytes(&plot_rows(task, &cells)?, PLOT_HEADER)?),
        (out.join(AGGREGATE), csv_bytes(&aggregate_rows(task, &cells)?, AGGREGATE_HEADER)?),
        (out.join(CURRICULUM), csv_bytes(&curriculum_rows(&cells)?, CURRICULUM_HEADER)?),
    ];
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn cmd_curriculum(results: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let (_, cells) = load_results(results)?;
    let path = out.unwrap_or(results).join(CURRICULUM);
    write_atomic(&path, &csv_bytes(&curriculum_rows(&cells)?, CURRICULUM_HEADER)?)?;
    Ok(path)
}

/// Parameters of `synth` beyond the generator's own.
#[derive(Clone, Debug)]
pub struct SynthOptions {
    pub config: SynthConfig,
    /// Seed, validation and acquisition budget of the emitted config.
    pub budget: u64,
    pub replicates: usize,
}

/// Writes a synthetic corpus and a ready-to-run config (`config.json`) with
/// MonoA on the first language, MMA and SMA.
pub fn cmd_synth(out: &Path, opts: &SynthOptions) -> Result<PathBuf, CliError> {
    let corpus = synth::generate(&opts.config)?;
    let files = corpus.write(out)?;
    let source = files.keys().next().cloned().expect("at least one language");
    let strategy = Some(StrategyKind::default_for(opts.config.task));
    let settings = [AllocationKind::MonoA { source }, AllocationKind::Mma, AllocationKind::Sma]
        .into_iter()
        .map(|allocation| SettingSpec { allocation, strategy })
        .collect();
    let languages = files
        .into_iter()
        .map(|(l, mut f)| {
            // Relative to the config so the directory can be moved.
            for p in [&mut f.train, &mut f.test] {
                if let Ok(rel) = p.strip_prefix(out) {
                    *p = rel.to_path_buf();
                }
            }
            (l, f)
        })
        .collect();
    let config = ExperimentConfig {
        task: opts.config.task,
        languages,
        settings,
        budget: BudgetConfig {
            seed: opts.budget,
            budget: opts.budget,
            validation: opts.budget,
            rounds: 4,
        },
        training: Default::default(),
        features: Default::default(),
        replicates: opts.replicates,
        seed: opts.config.seed,
        output: Some(PathBuf::from("results")),
        max_length: None,
        full_data_baselines: false,
    };
    let path = out.join("config.json");
    write_atomic(&path, config.to_json().as_bytes())?;
    Ok(path)
}
