//! Command-line entry points.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rand::Rng;

use crate::analysis;
use crate::config::{load_config, RunConfig};
use crate::env::make_scenario;
use crate::error::{Error, Result};
use crate::esp::{self, windows_from_records, ExperienceBuffer};
use crate::experience::read_experience;
use crate::neat::Genome;
use crate::nsga2::{rank_population, Individual};
use crate::reward::episode_objectives;
use crate::rng::substream;

#[derive(Parser)]
#[command(name = "chloresp", version, about = "Surrogate-assisted chlorination control evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a full run and write all artifacts to the output directory.
    Run {
        /// INI config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; overrides the config's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Build the Pareto report for a saved population.
    Pareto {
        /// population.json from a run checkpoint.
        #[arg(long)]
        population: PathBuf,
        /// How many individuals to keep.
        #[arg(long, default_value_t = 60)]
        top: usize,
        /// Output directory for pareto.csv and pareto.svg.
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll a saved genome out on sampled scenarios and print objectives.
    Eval {
        /// Genome JSON file.
        #[arg(long)]
        genome: PathBuf,
        /// INI config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of scenarios to sample.
        #[arg(long, default_value_t = 5)]
        scenarios: usize,
        /// Seed for scenario sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert an experience JSONL log into a window-buffer file.
    Ingest {
        /// Per-step experience records, one JSON object per line.
        #[arg(long)]
        jsonl: PathBuf,
        /// Output buffer file (windows, one JSON object per line).
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config_or_default(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn cmd_run(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
    iterations: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config_or_default(&config)?;
    if let Some(n) = iterations {
        cfg.esp.iterations = n;
    }
    let master_seed = seed.unwrap_or(cfg.master_seed);
    let state = esp::run(&cfg, master_seed, &out)?;
    let front0 = state.population.iter().filter(|i| i.rank == 0).count();
    println!(
        "run complete: seed={master_seed} iterations={} population={} front0={} buffer={} out={}",
        state.iteration,
        state.population.len(),
        front0,
        state.buffer.len(),
        out.display()
    );
    Ok(())
}

fn cmd_pareto(population: PathBuf, top: usize, out: PathBuf) -> Result<()> {
    let mut pop: Vec<Individual> = read_json(&population)?;
    if pop.is_empty() {
        return Err(Error::Data("population file holds no individuals".into()));
    }
    rank_population(&mut pop);
    let report = analysis::pareto_report(&pop, top);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    analysis::emit(&report, &out)?;
    let on_front = report.points.iter().filter(|p| p.on_front).count();
    println!(
        "pareto report: {} points, {} on front, written to {}",
        report.points.len(),
        on_front,
        out.display()
    );
    Ok(())
}

fn cmd_eval(genome: PathBuf, config: Option<PathBuf>, scenarios: usize, seed: u64) -> Result<()> {
    let cfg = load_config_or_default(&config)?;
    let genome: Genome = read_json(&genome)?;
    let mut rng = substream(seed, "eval-scenarios");
    for _ in 0..scenarios {
        let scenario_seed: u64 = rng.random();
        let scenario = make_scenario(scenario_seed, &cfg.env)?;
        let traj = crate::env::rollout(&scenario, &genome)?;
        let objectives = episode_objectives(&traj)?;
        println!(
            "scenario={scenario_seed} violation={} cost={} reward={}",
            objectives.violation,
            objectives.cost,
            traj.total_reward()
        );
    }
    Ok(())
}

fn cmd_ingest(jsonl: PathBuf, out: PathBuf) -> Result<()> {
    let (records, skipped) = read_experience(&jsonl, None)?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} malformed line(s)");
    }
    let windows = windows_from_records(&records);
    let mut buffer = ExperienceBuffer::new(None);
    for w in windows {
        buffer.push(w.window, w.provenance);
    }
    buffer.write_jsonl(&out)?;
    println!(
        "ingested {} records into {} windows at {}",
        records.len(),
        buffer.len(),
        out.display()
    );
    Ok(())
}

/// Parse argv and dispatch; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };

    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            iterations,
        } => cmd_run(config, seed, out, iterations),
        Command::Pareto {
            population,
            top,
            out,
        } => cmd_pareto(population, top, out),
        Command::Eval {
            genome,
            config,
            scenarios,
            seed,
        } => cmd_eval(genome, config, scenarios, seed),
        Command::Ingest { jsonl, out } => cmd_ingest(jsonl, out),
    };

    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            2
        }
    }
}
