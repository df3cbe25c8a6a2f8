use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use mlal_cli::commands::{AggregateRow, CurriculumRow, PlotRow};
use mlal_cli::output::{CellRecord, CellStatus, Manifest};
use mlal_cli::ExperimentConfig;
use mlal_core::experiment::aggregate;
use mlal_core::RoundResult;

fn mlal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlal"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic 3-language corpus with a small configuration; returns the config path.
fn synth(dir: &Path, train_size: &str, budget: &str, replicates: &str) -> PathBuf {
    let out = mlal(&[
        "synth",
        "--out",
        s(dir),
        "--languages",
        "3",
        "--train-size",
        train_size,
        "--test-size",
        "80",
        "--budget",
        budget,
        "--replicates",
        replicates,
        "--seed",
        "4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = dir.join("config.json");
    // Shorter training keeps the suite fast.
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    v["training"]["max_epochs"] = 10.into();
    v["training"]["patience"] = 4.into();
    std::fs::write(&config, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    config
}

/// Every file under `dir` except the manifest, with contents.
fn result_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn read_csv<T: serde::de::DeserializeOwned>(p: &Path) -> Vec<T> {
    csv::Reader::from_path(p).unwrap().deserialize().collect::<Result<_, _>>().unwrap()
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "100", "30", "1");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    v["foo"] = 1.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = mlal(&["validate", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    let out = mlal(&["synth", "--out", s(&dir.path().join("x")), "--overlap", "1.5"]);
    assert_eq!(out.status.code(), Some(1));

    let out = mlal(&["validate", "--config", s(&config)]);
    assert!(out.status.success());
    let echoed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(echoed["budget"]["rounds"], 4);
}

#[test]
fn config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "100", "30", "2");
    let a = mlal_cli::validate_config(&config).unwrap();
    let again = dir.path().join("again.json");
    std::fs::write(&again, a.to_json()).unwrap();
    let b = mlal_cli::validate_config(&again).unwrap();
    assert_eq!(a, b);
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), "50", "30", "1");
    synth(b.path(), "50", "30", "1");
    assert_eq!(result_files(a.path()), result_files(b.path()));
}

#[test]
fn run_report_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "200", "45", "2");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let run = |out: &Path, jobs: &str| {
        let o = mlal(&["run", "--config", s(&config), "--out", s(out), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&out_a, "1");
    run(&out_b, "3");
    assert_eq!(result_files(&out_a), result_files(&out_b));

    // Summary: one row per allocation, metric × AL flag columns.
    let mut summary = csv::Reader::from_path(out_a.join("summary.csv")).unwrap();
    let header: Vec<String> = summary.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["setting", "accuracy_al_mean", "accuracy_al_std", "accuracy_noal_mean", "accuracy_noal_std"]);
    let rows: Vec<String> = summary.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(rows, ["MonoA[la]", "MMA", "SMA"]);

    let o = mlal(&["report", s(&out_a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let config = ExperimentConfig::from_json(&Manifest::load(&out_a).unwrap().config.to_json(), Path::new("/")).unwrap();
    let records: Vec<CellRecord> = std::fs::read_to_string(out_a.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 6 * 2 * 4);

    // Plot data: MMA has 3 languages × 4 rounds rows per metric and flag.
    let plot: Vec<PlotRow> = read_csv(&out_a.join("plot.csv"));
    assert_eq!(plot.iter().filter(|r| r.setting == "MMA" && r.al_flag).count(), 12);

    // Aggregates are exactly the library fold over the persisted rounds.
    let agg: Vec<AggregateRow> = read_csv(&out_a.join("aggregate.csv"));
    assert_eq!(agg.len(), config.cells().len());
    for row in &agg {
        let mut reps: Vec<Vec<RoundResult>> = vec![Vec::new(); config.replicates];
        for r in records.iter().filter(|r| r.allocation.to_string() == row.setting && r.with_al == row.al_flag) {
            reps[r.replicate].push(r.result.clone());
        }
        let live = aggregate(reps.iter().map(Vec::as_slice), &row.metric).unwrap();
        assert_eq!(live.mean, row.mean);
        assert_eq!(live.stddev, row.stddev);
    }

    // Curriculum identity holds on every emitted row.
    let cur: Vec<CurriculumRow> = read_csv(&out_a.join("curriculum.csv"));
    assert!(!cur.is_empty());
    let mut groups: BTreeMap<(String, bool, usize, u32), Vec<&CurriculumRow>> = BTreeMap::new();
    for r in &cur {
        assert!(r.identity_residual.abs() <= 1e-9);
        groups.entry((r.setting.clone(), r.al_flag, r.replicate, r.round)).or_default().push(r);
    }
    let b = 45 / 3;
    for ((setting, _, _, round), rows) in groups {
        let per_round: u64 = if setting == "MMA" { 3 * (45 / 3 / 3) } else { b };
        let lhs: f64 = rows.iter().map(|r| r.alpha * (1.0 + r.relative)).sum();
        let total: u64 = rows.iter().map(|r| r.cumulative).sum();
        assert!((lhs - total as f64 / (round as f64 * per_round as f64)).abs() <= 1e-9);
    }

    // Resuming a finished run skips every cell and changes nothing.
    let before = result_files(&out_a);
    let o = mlal(&["run", "--config", s(&config_path(dir.path())), "--out", s(&out_a)]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stderr).matches("skipping complete cell").count(), 6);
    let mut after = result_files(&out_a);
    for f in ["plot.csv", "aggregate.csv", "curriculum.csv"] {
        after.remove(Path::new(f));
    }
    let mut before = before;
    for f in ["plot.csv", "aggregate.csv", "curriculum.csv"] {
        before.remove(Path::new(f));
    }
    assert_eq!(before, after);

    // A different seed into the same directory is refused.
    let o = mlal(&["run", "--config", s(&config_path(dir.path())), "--out", s(&out_a), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(2));
}

fn config_path(dir: &Path) -> PathBuf {
    dir.join("config.json")
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mlal(&["report", s(dir.path())]).status.code(), Some(2));
    assert_eq!(mlal(&["curriculum", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn interrupted_run_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), "400", "60", "2");
    let out = dir.path().join("killed");
    let reference = dir.path().join("reference");

    let mut child = Command::new(env!("CARGO_BIN_EXE_mlal"))
        .args(["run", "--config", s(&config), "--out", s(&out), "--jobs", "2"])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let mut killed_with = None;
    while start.elapsed() < Duration::from_secs(300) {
        if let Ok(m) = Manifest::load(&out) {
            let done = m.cells.iter().filter(|c| c.status == CellStatus::Complete).count();
            if done >= 1 {
                child.kill().unwrap();
                killed_with = Some(done);
                break;
            }
        }
        if child.try_wait().unwrap().is_some() {
            break;
        }
        std::thread::sleep(Duration::from_millis(5));
    }
    child.wait().unwrap();
    let done = killed_with.expect("run finished before it could be interrupted");
    let m = Manifest::load(&out).unwrap();
    let complete = m.cells.iter().filter(|c| c.status == CellStatus::Complete).count();
    assert!(complete >= done);
    if complete < m.cells.len() {
        assert!(!out.join("results.jsonl").exists());
    }

    let o = mlal(&["run", "--config", s(&config), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let skipped = String::from_utf8_lossy(&o.stderr).matches("skipping complete cell").count();
    assert_eq!(skipped, complete);
    assert!(Manifest::load(&out).unwrap().is_complete());

    let o = mlal(&["run", "--config", s(&config), "--out", s(&reference)]);
    assert!(o.status.success());
    assert_eq!(result_files(&out), result_files(&reference));
}
