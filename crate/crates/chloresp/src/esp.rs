//! The surrogate-assisted evolution loop.
//!
//! A run is: collect initial data by evolving prescriptors against the real
//! simulator, then for a fixed number of iterations (a) retrain the
//! surrogate on the whole experience buffer, (b) evolve the population for
//! several generations scored by the surrogate on a fixed context sample,
//! (c) roll the top prescriptors out on freshly sampled scenarios, and
//! (d) fold those trajectories back into the buffer before re-ranking.
//!
//! All randomness flows through the named sub-streams of the master seed, so
//! identical seeds give identical runs, including the metrics log bytes.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::env::{make_scenario, rollout, Scenario, Trajectory};
use crate::error::{Error, Result};
use crate::experience::{records_from_trajectory, ExperienceRecord, ExperienceWriter};
use crate::neat::{initial_genome, Genome, InnovationRegistry};
use crate::nsga2::{
    self, generation_stats, next_generation, rank_population, Individual, ObjectiveSource,
    Variation,
};
use crate::reward::{episode_objectives, ObjectiveVector};
use crate::rng::RngStreams;
use crate::surrogate::{
    predict_fitness, train, windows_from_trajectory, ExperienceWindow, SurrogateParams,
    TrainReport, WINDOW_LEN,
};

/// Where a buffered window came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: usize,
    pub scenario_seed: u64,
    pub genome_id: u64,
}

/// Append-only store of experience windows with aligned provenance and an
/// optional FIFO capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceBuffer {
    windows: Vec<ExperienceWindow>,
    provenance: Vec<Provenance>,
    capacity: Option<usize>,
}

impl ExperienceBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            windows: Vec::new(),
            provenance: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[ExperienceWindow] {
        &self.windows
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn push(&mut self, window: ExperienceWindow, provenance: Provenance) {
        self.windows.push(window);
        self.provenance.push(provenance);
        if let Some(cap) = self.capacity {
            let excess = self.windows.len().saturating_sub(cap);
            if excess > 0 {
                self.windows.drain(..excess);
                self.provenance.drain(..excess);
            }
        }
    }

    /// Slide a trajectory into windows and append them all.
    pub fn append_trajectory(
        &mut self,
        traj: &Trajectory,
        iteration: usize,
        scenario_seed: u64,
        genome_id: u64,
    ) {
        let provenance = Provenance {
            iteration,
            scenario_seed,
            genome_id,
        };
        for window in windows_from_trajectory(traj) {
            self.push(window, provenance);
        }
    }

    /// Sample `n` observation sequences with replacement: half uniformly
    /// over the whole buffer, half from the most recent iteration's windows.
    /// The recent half keeps the context sample anchored to the states the
    /// latest evaluated prescriptors actually visit, which is where the
    /// surrogate has fresh training signal.
    pub fn sample_contexts(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
        let newest = self
            .provenance
            .iter()
            .map(|p| p.iteration)
            .max()
            .unwrap_or(0);
        let recent: Vec<usize> = self
            .provenance
            .iter()
            .enumerate()
            .filter(|(_, p)| p.iteration == newest)
            .map(|(i, _)| i)
            .collect();
        let uniform_share = n - n / 2;
        (0..n)
            .map(|i| {
                let idx = if i < uniform_share || recent.is_empty() {
                    rng.random_range(0..self.windows.len())
                } else {
                    recent[rng.random_range(0..recent.len())]
                };
                self.windows[idx].obs_seq.clone()
            })
            .collect()
    }

    /// Write the buffer as window-per-line JSONL.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (w, p) in self.windows.iter().zip(self.provenance.iter()) {
            let entry = BufferedWindow {
                window: w.clone(),
                provenance: *p,
            };
            out.push_str(&serde_json::to_string(&entry).map_err(|e| Error::json(path, e))?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Read a window-per-line JSONL buffer file.
    pub fn read_jsonl(path: &Path, capacity: Option<usize>) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut buffer = Self::new(capacity);
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: BufferedWindow =
                serde_json::from_str(&line).map_err(|e| Error::json(path, e))?;
            buffer.push(entry.window, entry.provenance);
        }
        Ok(buffer)
    }
}

/// Serialized form of one buffered window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedWindow {
    pub window: ExperienceWindow,
    pub provenance: Provenance,
}

/// Group per-step records into 10-step windows, never spanning rollout
/// boundaries. Records are grouped by (iteration, scenario_seed, genome_id)
/// and must be consecutive in `t` within a group.
pub fn windows_from_records(records: &[ExperienceRecord]) -> Vec<BufferedWindow> {
    let mut groups: Vec<(Provenance, Vec<&ExperienceRecord>)> = Vec::new();
    for r in records {
        let key = Provenance {
            iteration: r.iteration,
            scenario_seed: r.scenario_seed,
            genome_id: r.genome_id,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push(r),
            None => groups.push((key, vec![r])),
        }
    }

    let mut out = Vec::new();
    for (provenance, mut steps) in groups {
        steps.sort_by_key(|r| r.t);
        // Split on gaps so windows never cross missing timesteps.
        let mut runs: Vec<Vec<&ExperienceRecord>> = Vec::new();
        for step in steps {
            match runs.last_mut() {
                Some(run) if run.last().unwrap().t + 1 == step.t => run.push(step),
                _ => runs.push(vec![step]),
            }
        }
        for run in runs {
            if run.len() < WINDOW_LEN {
                continue;
            }
            for start in 0..=run.len() - WINDOW_LEN {
                let slice = &run[start..start + WINDOW_LEN];
                let last = slice[WINDOW_LEN - 1];
                out.push(BufferedWindow {
                    window: ExperienceWindow {
                        obs_seq: slice.iter().map(|r| r.obs.clone()).collect(),
                        act_seq: slice.iter().map(|r| r.action.clone()).collect(),
                        target: last.reward_components.penalty + last.reward_components.bonus,
                    },
                    provenance,
                });
            }
        }
    }
    out
}

/// One row of the metrics log. Inapplicable columns stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub phase: &'static str,
    pub iteration: usize,
    pub generation: Option<usize>,
    pub front0_size: Option<usize>,
    /// All front sizes, semicolon-joined (e.g. "87;10;3").
    pub front_sizes: Option<String>,
    pub violation_min: Option<f64>,
    pub violation_mean: Option<f64>,
    pub violation_max: Option<f64>,
    pub cost_min: Option<f64>,
    pub cost_mean: Option<f64>,
    pub cost_max: Option<f64>,
    pub elite_mean_reward: Option<f64>,
    pub elite_rollouts: Option<usize>,
    pub train_epochs: Option<usize>,
    pub train_best_val_mse: Option<f64>,
    pub buffer_windows: usize,
}

pub const METRICS_HEADER: &str = "phase,iteration,generation,front0_size,front_sizes,violation_min,violation_mean,violation_max,cost_min,cost_mean,cost_max,elite_mean_reward,elite_rollouts,train_epochs,train_best_val_mse,buffer_windows";

impl MetricsRow {
    fn blank(phase: &'static str, iteration: usize, buffer_windows: usize) -> Self {
        Self {
            phase,
            iteration,
            generation: None,
            front0_size: None,
            front_sizes: None,
            violation_min: None,
            violation_mean: None,
            violation_max: None,
            cost_min: None,
            cost_mean: None,
            cost_max: None,
            elite_mean_reward: None,
            elite_rollouts: None,
            train_epochs: None,
            train_best_val_mse: None,
            buffer_windows,
        }
    }

    pub fn to_csv_line(&self) -> String {
        fn fmt_u(v: &Option<usize>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        fn fmt_f(v: &Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.phase,
            self.iteration,
            fmt_u(&self.generation),
            fmt_u(&self.front0_size),
            self.front_sizes.clone().unwrap_or_default(),
            fmt_f(&self.violation_min),
            fmt_f(&self.violation_mean),
            fmt_f(&self.violation_max),
            fmt_f(&self.cost_min),
            fmt_f(&self.cost_mean),
            fmt_f(&self.cost_max),
            fmt_f(&self.elite_mean_reward),
            fmt_u(&self.elite_rollouts),
            fmt_u(&self.train_epochs),
            fmt_f(&self.train_best_val_mse),
            self.buffer_windows,
        )
    }
}

fn stats_row(
    phase: &'static str,
    iteration: usize,
    generation: usize,
    pop: &[Individual],
    buffer_windows: usize,
) -> MetricsRow {
    let stats = generation_stats(pop);
    MetricsRow {
        generation: Some(generation),
        front0_size: Some(stats.front_sizes.first().copied().unwrap_or(0)),
        front_sizes: Some(
            stats
                .front_sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";"),
        ),
        violation_min: Some(stats.violation_min),
        violation_mean: Some(stats.violation_mean),
        violation_max: Some(stats.violation_max),
        cost_min: Some(stats.cost_min),
        cost_mean: Some(stats.cost_mean),
        cost_max: Some(stats.cost_max),
        ..MetricsRow::blank(phase, iteration, buffer_windows)
    }
}

/// Mutable run state between phases.
#[derive(Debug, Clone)]
pub struct EspRunState {
    pub iteration: usize,
    pub population: Vec<Individual>,
    pub surrogate: SurrogateParams,
    pub buffer: ExperienceBuffer,
    pub streams: RngStreams,
    pub scenario_pool: Vec<u64>,
    pub metrics: Vec<MetricsRow>,
}

/// The loop driver: owns the run state, the innovation registry, and the
/// optional experience log.
pub struct EspRun {
    pub config: RunConfig,
    pub state: EspRunState,
    registry: InnovationRegistry,
    writer: Option<ExperienceWriter>,
}

impl EspRun {
    /// Set up streams, the scenario pool, the initial population (unranked,
    /// unevaluated), and an untrained surrogate.
    pub fn new(config: RunConfig, master_seed: u64, writer: Option<ExperienceWriter>) -> Result<Self> {
        config.validate()?;
        let mut streams = RngStreams::from_master(master_seed);
        let scenario_pool: Vec<u64> = (0..config.esp.scenario_pool)
            .map(|_| streams.sampling.random())
            .collect();
        let k = config.env.num_nodes;
        let m = config.env.num_injections;
        let mut registry = InnovationRegistry::new(k, m);
        let surrogate = SurrogateParams::init(&mut streams.surrogate, k, m, &config.surrogate);
        let population: Vec<Genome> = (0..config.neat.population)
            .map(|_| initial_genome(&mut streams.evolution, k, m, &mut registry))
            .collect();
        let buffer = ExperienceBuffer::new(match config.esp.buffer_capacity {
            0 => None,
            cap => Some(cap),
        });
        let state = EspRunState {
            iteration: 0,
            population: population
                .into_iter()
                .map(|g| {
                    Individual::new(
                        g,
                        ObjectiveVector {
                            violation: f64::NAN,
                            cost: f64::NAN,
                        },
                        ObjectiveSource::Environment,
                    )
                })
                .collect(),
            surrogate,
            buffer,
            streams,
            scenario_pool,
            metrics: Vec::new(),
        };
        Ok(Self {
            config,
            state,
            registry,
            writer,
        })
    }

    fn scenarios_from_pool(&mut self, count: usize) -> Result<Vec<Scenario>> {
        let picks = index_sample(
            &mut self.state.streams.sampling,
            self.state.scenario_pool.len(),
            count.min(self.state.scenario_pool.len()),
        );
        picks
            .iter()
            .map(|i| make_scenario(self.state.scenario_pool[i], &self.config.env))
            .collect()
    }

    /// Roll a genome over scenarios, log everything, return mean objectives
    /// and the mean episode reward.
    fn evaluate_on_env(
        buffer: &mut ExperienceBuffer,
        writer: &mut Option<ExperienceWriter>,
        scenarios: &[Scenario],
        genome: &Genome,
        iteration: usize,
    ) -> Result<(ObjectiveVector, f64)> {
        let mut violation = 0.0;
        let mut cost = 0.0;
        let mut reward = 0.0;
        let mut records = Vec::new();
        for scenario in scenarios {
            let traj = rollout(scenario, genome)?;
            let objectives = episode_objectives(&traj)?;
            violation += objectives.violation;
            cost += objectives.cost;
            reward += traj.total_reward();
            buffer.append_trajectory(&traj, iteration, scenario.seed, genome.id);
            records.extend(records_from_trajectory(&traj, iteration, scenario.seed, genome.id));
        }
        if let Some(w) = writer.as_mut() {
            w.write_batch(&records)?;
        }
        let n = scenarios.len() as f64;
        Ok((
            ObjectiveVector {
                violation: violation / n,
                cost: cost / n,
            },
            reward / n,
        ))
    }

    /// Phase 1: evolve against the real environment for `init_generations`,
    /// logging every rollout's windows into the buffer.
    pub fn collect_initial_data(&mut self) -> Result<()> {
        let scenarios = self.scenarios_from_pool(self.config.esp.eval_scenarios)?;
        let iteration = 0;

        // Evaluate the random initial population once.
        for idx in 0..self.state.population.len() {
            let genome = self.state.population[idx].genome.clone();
            let (objectives, _) = Self::evaluate_on_env(
                &mut self.state.buffer,
                &mut self.writer,
                &scenarios,
                &genome,
                iteration,
            )?;
            self.state.population[idx].objectives = objectives;
            self.state.population[idx].objective_source = ObjectiveSource::Environment;
        }
        rank_population(&mut self.state.population);
        self.state.metrics.push(stats_row(
            "init",
            iteration,
            0,
            &self.state.population,
            self.state.buffer.len(),
        ));

        for generation in 1..=self.config.esp.init_generations {
            let variation = Variation {
                rates: &self.config.neat.rates,
                crossover_prob: self.config.nsga2.crossover_prob,
            };
            let buffer = &mut self.state.buffer;
            let writer = &mut self.writer;
            let mut evaluator = |genome: &Genome| -> Result<ObjectiveVector> {
                Self::evaluate_on_env(buffer, writer, &scenarios, genome, iteration)
                    .map(|(o, _)| o)
            };
            self.state.population = next_generation(
                &self.state.population,
                &mut self.state.streams.evolution,
                &mut self.registry,
                &variation,
                &mut evaluator,
                ObjectiveSource::Environment,
            )?;
            self.state.metrics.push(stats_row(
                "init",
                iteration,
                generation,
                &self.state.population,
                self.state.buffer.len(),
            ));
        }
        Ok(())
    }

    /// Indices of the top `n` individuals under (rank, crowding desc, id).
    fn elite_indices(pop: &[Individual], n: usize) -> Vec<usize> {
        let mut order = nsga2::selection_order(pop);
        order.truncate(n);
        order
    }

    /// Roll the current elites out on freshly sampled scenarios, write their
    /// real objectives back, and log the round. Returns the mean episode
    /// reward over the elites.
    pub fn evaluate_elites(&mut self, iteration: usize) -> Result<f64> {
        let scenarios = self.scenarios_from_pool(self.config.esp.elite_scenarios)?;
        let elites = Self::elite_indices(&self.state.population, self.config.esp.elites);

        let mut reward_sum = 0.0;
        for &idx in &elites {
            let genome = self.state.population[idx].genome.clone();
            let (objectives, reward) = Self::evaluate_on_env(
                &mut self.state.buffer,
                &mut self.writer,
                &scenarios,
                &genome,
                iteration,
            )?;
            self.state.population[idx].objectives = objectives;
            self.state.population[idx].objective_source = ObjectiveSource::Environment;
            reward_sum += reward;
        }
        rank_population(&mut self.state.population);

        let mean_reward = reward_sum / elites.len() as f64;
        self.state.metrics.push(MetricsRow {
            elite_mean_reward: Some(mean_reward),
            elite_rollouts: Some(elites.len() * scenarios.len()),
            ..MetricsRow::blank("elite", iteration, self.state.buffer.len())
        });
        Ok(mean_reward)
    }

    /// One full ESP iteration: train the surrogate, evolve under it, then
    /// evaluate elites on the real environment and grow the buffer.
    pub fn esp_iteration(&mut self) -> Result<TrainReport> {
        if self.state.buffer.is_empty() {
            return Err(Error::Data("esp iteration needs a non-empty buffer".into()));
        }
        let iteration = self.state.iteration + 1;

        // (a) Train on the full buffer; a failure leaves the state as-is.
        let mut candidate = self.state.surrogate.clone();
        let report = train(
            &mut candidate,
            self.state.buffer.windows(),
            &self.config.surrogate,
            &mut self.state.streams.surrogate,
        )?;
        self.state.surrogate = candidate;
        self.state.metrics.push(MetricsRow {
            train_epochs: Some(report.epochs_run),
            train_best_val_mse: Some(report.validation_mse[report.best_epoch]),
            ..MetricsRow::blank("train", iteration, self.state.buffer.len())
        });

        // (b) Surrogate-driven evolution on a fixed per-iteration context.
        if !self.config.esp.carry_population {
            let k = self.config.env.num_nodes;
            let m = self.config.env.num_injections;
            self.state.population = (0..self.config.neat.population)
                .map(|_| {
                    let g = initial_genome(&mut self.state.streams.evolution, k, m, &mut self.registry);
                    Individual::new(
                        g,
                        ObjectiveVector {
                            violation: f64::NAN,
                            cost: f64::NAN,
                        },
                        ObjectiveSource::Surrogate,
                    )
                })
                .collect();
        }
        let contexts = self
            .state
            .buffer
            .sample_contexts(self.config.esp.context_windows, &mut self.state.streams.sampling);
        let episode_length = self.config.env.episode_length;

        // Refresh surrogate scores under the newly trained predictor.
        // Individuals holding real-environment objectives keep them: the
        // violation scales agree, and the real numbers are the ground truth
        // that keeps surrogate drift in check.
        for ind in self.state.population.iter_mut() {
            if ind.objective_source == ObjectiveSource::Surrogate
                || !ind.objectives.is_finite()
            {
                ind.objectives = predict_fitness(
                    &self.state.surrogate.net,
                    &self.config.surrogate,
                    &ind.genome,
                    &contexts,
                    episode_length,
                )?;
                ind.objective_source = ObjectiveSource::Surrogate;
            }
        }
        rank_population(&mut self.state.population);

        for generation in 1..=self.config.esp.surrogate_generations {
            let variation = Variation {
                rates: &self.config.neat.rates,
                crossover_prob: self.config.nsga2.crossover_prob,
            };
            let surrogate_net = &self.state.surrogate.net;
            let surrogate_cfg = &self.config.surrogate;
            let contexts_ref = &contexts;
            let mut evaluator = |genome: &Genome| -> Result<ObjectiveVector> {
                predict_fitness(surrogate_net, surrogate_cfg, genome, contexts_ref, episode_length)
            };
            self.state.population = next_generation(
                &self.state.population,
                &mut self.state.streams.evolution,
                &mut self.registry,
                &variation,
                &mut evaluator,
                ObjectiveSource::Surrogate,
            )?;
            self.state.metrics.push(stats_row(
                "evolve",
                iteration,
                generation,
                &self.state.population,
                self.state.buffer.len(),
            ));
        }

        // (c) + (d) Real rollouts for the elites, buffer growth, re-rank.
        self.evaluate_elites(iteration)?;
        self.state.iteration = iteration;
        Ok(report)
    }

    /// Execute the configured number of iterations after initial collection,
    /// with a baseline elite round so iteration 0 has a comparable number.
    pub fn execute(&mut self) -> Result<()> {
        self.collect_initial_data()?;
        self.evaluate_elites(0)?;
        for _ in 0..self.config.esp.iterations {
            self.esp_iteration()?;
        }
        Ok(())
    }
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_string(path, &text)
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for row in rows {
        s.push_str(&row.to_csv_line());
        s.push('\n');
    }
    s
}

/// Run the whole pipeline and write every artifact under `out_dir`:
/// `run.json`, `metrics.csv`, `experience.jsonl`, `checkpoints/iter{n}/`,
/// and the terminal `pareto/` report.
pub fn run(config: &RunConfig, master_seed: u64, out_dir: &Path) -> Result<EspRunState> {
    let mut config = config.clone();
    config.master_seed = master_seed;
    config.validate()?;

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoints = out_dir.join("checkpoints");
    fs::create_dir_all(&checkpoints).map_err(|e| Error::io(&checkpoints, e))?;

    write_json(&out_dir.join("run.json"), &config)?;
    let writer = ExperienceWriter::create(&out_dir.join("experience.jsonl"))?;

    let mut esp = EspRun::new(config.clone(), master_seed, Some(writer))?;
    esp.collect_initial_data()?;
    esp.evaluate_elites(0)?;
    write_checkpoint(&checkpoints.join("iter0"), &esp.state)?;

    for n in 1..=config.esp.iterations {
        esp.esp_iteration()?;
        write_checkpoint(&checkpoints.join(format!("iter{n}")), &esp.state)?;
    }

    write_string(&out_dir.join("metrics.csv"), &metrics_csv(&esp.state.metrics))?;

    let pareto_dir = out_dir.join("pareto");
    fs::create_dir_all(&pareto_dir).map_err(|e| Error::io(&pareto_dir, e))?;
    let report =
        crate::analysis::pareto_report(&esp.state.population, config.analysis.top_n);
    crate::analysis::emit(&report, &pareto_dir)?;

    Ok(esp.state)
}

fn write_checkpoint(dir: &Path, state: &EspRunState) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("population.json"), &state.population)?;
    write_json(&dir.join("surrogate.json"), &state.surrogate)?;
    Ok(())
}
