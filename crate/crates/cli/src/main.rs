use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlal_cli::{commands, CliError, RunOptions, SynthOptions};
use mlal_core::synth::SynthConfig;
use mlal_core::TaskKind;

#[derive(Parser)]
#[command(name = "mlal", version, about = "Multilingual active-learning budget experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print it with defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every setting with and without active learning.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (1 = sequential; default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write plot, aggregate and curriculum CSVs for a results directory.
    Report {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write only the curriculum CSV for a results directory.
    Curriculum {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic multilingual corpus and a matching config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_task, default_value = "classification")]
        task: TaskKind,
        #[arg(long, default_value_t = 3)]
        languages: usize,
        /// Probability that a concept's surface form is shared across languages.
        #[arg(long, default_value_t = 0.5)]
        overlap: f64,
        #[arg(long, default_value_t = 1500)]
        train_size: usize,
        #[arg(long, default_value_t = 300)]
        test_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed, validation and acquisition budget of the emitted config.
        #[arg(long, default_value_t = 300)]
        budget: u64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
    },
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown task {s:?} (classification, sequence_tagging, dependency_parsing)"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => {
            let c = commands::cmd_validate(&config)?;
            println!("{}", c.to_json());
        }
        Command::Run { config, jobs, out, seed } => {
            let out = commands::cmd_run(&config, &RunOptions { jobs, out, seed })?;
            println!("{}", out.display());
        }
        Command::Report { results, out } => {
            for p in commands::cmd_report(&results, out.as_deref())? {
                println!("{}", p.display());
            }
        }
        Command::Curriculum { results, out } => {
            println!("{}", commands::cmd_curriculum(&results, out.as_deref())?.display());
        }
        Command::Synth {
            out,
            task,
            languages,
            overlap,
            train_size,
            test_size,
            seed,
            budget,
            replicates,
        } => {
            let opts = SynthOptions {
                config: SynthConfig {
                    task,
                    languages,
                    overlap,
                    train_size,
                    test_size,
                    seed,
                },
                budget,
                replicates,
            };
            opts.config.validate().map_err(|e| CliError::Validation(vec![e.to_string()]))?;
            println!("{}", commands::cmd_synth(&out, &opts)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
