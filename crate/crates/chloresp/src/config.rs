//! INI-style run configuration.
//!
//! The dialect is deliberately small: `key = value` pairs, `[section]`
//! headers, `#` comments, case-sensitive keys. Unknown sections or keys are
//! rejected, every value is range-checked at load time, and the resolved
//! config serializes back to INI as a fixed point of `load`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::neat::MutationRates;
use crate::surrogate::SurrogateConfig;

/// Population size plus mutation knobs, the `[neat]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeatConfig {
    pub population: usize,
    pub rates: MutationRates,
}

impl Default for NeatConfig {
    fn default() -> Self {
        Self {
            population: 100,
            rates: MutationRates::default(),
        }
    }
}

impl NeatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("neat.population must be >= 2".into()));
        }
        self.rates.validate()
    }
}

/// Selection-level knobs, the `[nsga2]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nsga2Config {
    pub crossover_prob: f64,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self { crossover_prob: 0.9 }
    }
}

impl Nsga2Config {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Config("nsga2.crossover_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Loop structure of the whole run, the `[esp]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EspConfig {
    /// Surrogate-train / evolve / evaluate cycles after initial collection.
    pub iterations: usize,
    /// Real-environment generations during initial data collection.
    pub init_generations: usize,
    /// Surrogate-scored generations per iteration.
    pub surrogate_generations: usize,
    /// How many top individuals get real rollouts each iteration.
    pub elites: usize,
    /// Scenarios sampled (without replacement) per elite round.
    pub elite_scenarios: usize,
    /// Scenarios averaged per fitness evaluation during initial collection.
    pub eval_scenarios: usize,
    /// Context windows sampled per iteration for surrogate fitness.
    pub context_windows: usize,
    /// Size of the seeded scenario pool.
    pub scenario_pool: usize,
    /// Keep the population across iterations instead of re-seeding it.
    pub carry_population: bool,
    /// Experience buffer cap; 0 means unlimited (no eviction).
    pub buffer_capacity: usize,
}

impl Default for EspConfig {
    fn default() -> Self {
        Self {
            iterations: 4,
            init_generations: 10,
            surrogate_generations: 20,
            elites: 5,
            elite_scenarios: 5,
            eval_scenarios: 1,
            context_windows: 64,
            scenario_pool: 16,
            carry_population: true,
            buffer_capacity: 0,
        }
    }
}

impl EspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites < 1 {
            return Err(Error::Config("esp.elites must be >= 1".into()));
        }
        if self.elite_scenarios < 1 {
            return Err(Error::Config("esp.elite_scenarios must be >= 1".into()));
        }
        if self.eval_scenarios < 1 {
            return Err(Error::Config("esp.eval_scenarios must be >= 1".into()));
        }
        if self.context_windows < 1 {
            return Err(Error::Config("esp.context_windows must be >= 1".into()));
        }
        if self.scenario_pool < self.elite_scenarios || self.scenario_pool < self.eval_scenarios {
            return Err(Error::Config(
                "esp.scenario_pool must cover elite_scenarios and eval_scenarios".into(),
            ));
        }
        Ok(())
    }
}

/// Terminal analysis knobs, the `[analysis]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub top_n: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { top_n: 60 }
    }
}

/// The fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub master_seed: u64,
    pub env: EnvConfig,
    pub neat: NeatConfig,
    pub nsga2: Nsga2Config,
    pub surrogate: SurrogateConfig,
    pub esp: EspConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.neat.validate()?;
        self.nsga2.validate()?;
        self.surrogate.validate()?;
        self.esp.validate()?;
        if self.esp.elites > self.neat.population {
            return Err(Error::Config(
                "esp.elites cannot exceed neat.population".into(),
            ));
        }
        if self.analysis.top_n < 1 {
            return Err(Error::Config("analysis.top_n must be >= 1".into()));
        }
        Ok(())
    }

    /// Serialize back to the INI dialect `load_config` reads.
    pub fn to_ini_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "\n[env]");
        let _ = writeln!(s, "num_nodes = {}", self.env.num_nodes);
        let _ = writeln!(s, "num_injections = {}", self.env.num_injections);
        let _ = writeln!(s, "episode_length = {}", self.env.episode_length);
        let _ = writeln!(s, "decay_base = {}", self.env.decay_base);
        let _ = writeln!(s, "demand_amplitude = {}", self.env.demand_amplitude);
        let _ = writeln!(s, "mixing_perturbation = {}", self.env.mixing_perturbation);
        let _ = writeln!(s, "injection_gain = {}", self.env.injection_gain);
        let _ = writeln!(s, "\n[neat]");
        let _ = writeln!(s, "population = {}", self.neat.population);
        let _ = writeln!(s, "weight_mutate_prob = {}", self.neat.rates.weight_mutate_prob);
        let _ = writeln!(s, "weight_perturb_sigma = {}", self.neat.rates.weight_perturb_sigma);
        let _ = writeln!(s, "weight_replace_prob = {}", self.neat.rates.weight_replace_prob);
        let _ = writeln!(s, "add_connection_prob = {}", self.neat.rates.add_connection_prob);
        let _ = writeln!(s, "add_node_prob = {}", self.neat.rates.add_node_prob);
        let _ = writeln!(s, "\n[nsga2]");
        let _ = writeln!(s, "crossover_prob = {}", self.nsga2.crossover_prob);
        let _ = writeln!(s, "\n[surrogate]");
        let _ = writeln!(s, "hidden_size = {}", self.surrogate.hidden_size);
        let _ = writeln!(s, "head_layer1 = {}", self.surrogate.head_layer1);
        let _ = writeln!(s, "head_layer2 = {}", self.surrogate.head_layer2);
        let _ = writeln!(s, "dropout = {}", self.surrogate.dropout);
        let _ = writeln!(s, "learning_rate = {}", self.surrogate.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.surrogate.epochs);
        let _ = writeln!(s, "patience = {}", self.surrogate.patience);
        let _ = writeln!(s, "val_split = {}", self.surrogate.val_split);
        let _ = writeln!(s, "batch_size = {}", self.surrogate.batch_size);
        let _ = writeln!(s, "\n[esp]");
        let _ = writeln!(s, "iterations = {}", self.esp.iterations);
        let _ = writeln!(s, "init_generations = {}", self.esp.init_generations);
        let _ = writeln!(s, "surrogate_generations = {}", self.esp.surrogate_generations);
        let _ = writeln!(s, "elites = {}", self.esp.elites);
        let _ = writeln!(s, "elite_scenarios = {}", self.esp.elite_scenarios);
        let _ = writeln!(s, "eval_scenarios = {}", self.esp.eval_scenarios);
        let _ = writeln!(s, "context_windows = {}", self.esp.context_windows);
        let _ = writeln!(s, "scenario_pool = {}", self.esp.scenario_pool);
        let _ = writeln!(s, "carry_population = {}", self.esp.carry_population);
        let _ = writeln!(s, "buffer_capacity = {}", self.esp.buffer_capacity);
        let _ = writeln!(s, "\n[analysis]");
        let _ = writeln!(s, "top_n = {}", self.analysis.top_n);
        s
    }
}

fn parse_value<T: std::str::FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| {
        let name = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        Error::Config(format!("out-of-range or malformed value for {name}: `{raw}`"))
    })
}

/// Parse INI text into a config, starting from defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut section = String::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;

        if let Some(stripped) = line.strip_prefix('[') {
            let name = stripped.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!(
                    "syntax error on line {lineno}: unterminated section header"
                ))
            })?;
            match name {
                "env" | "neat" | "nsga2" | "surrogate" | "esp" | "analysis" => {
                    section = name.to_string();
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown section [{other}] on line {lineno}"
                    )))
                }
            }
            continue;
        }

        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "syntax error on line {lineno}: expected `key = value`"
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut config, &section, key, value).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{msg} (line {lineno})")),
            other => other,
        })?;
    }

    config.validate()?;
    Ok(config)
}

fn apply_key(config: &mut RunConfig, section: &str, key: &str, value: &str) -> Result<()> {
    match (section, key) {
        ("", "master_seed") => config.master_seed = parse_value(section, key, value)?,
        ("env", "num_nodes") => config.env.num_nodes = parse_value(section, key, value)?,
        ("env", "num_injections") => config.env.num_injections = parse_value(section, key, value)?,
        ("env", "episode_length") => config.env.episode_length = parse_value(section, key, value)?,
        ("env", "decay_base") => config.env.decay_base = parse_value(section, key, value)?,
        ("env", "demand_amplitude") => {
            config.env.demand_amplitude = parse_value(section, key, value)?
        }
        ("env", "mixing_perturbation") => {
            config.env.mixing_perturbation = parse_value(section, key, value)?
        }
        ("env", "injection_gain") => config.env.injection_gain = parse_value(section, key, value)?,
        ("neat", "population") => config.neat.population = parse_value(section, key, value)?,
        ("neat", "weight_mutate_prob") => {
            config.neat.rates.weight_mutate_prob = parse_value(section, key, value)?
        }
        ("neat", "weight_perturb_sigma") => {
            config.neat.rates.weight_perturb_sigma = parse_value(section, key, value)?
        }
        ("neat", "weight_replace_prob") => {
            config.neat.rates.weight_replace_prob = parse_value(section, key, value)?
        }
        ("neat", "add_connection_prob") => {
            config.neat.rates.add_connection_prob = parse_value(section, key, value)?
        }
        ("neat", "add_node_prob") => {
            config.neat.rates.add_node_prob = parse_value(section, key, value)?
        }
        ("nsga2", "crossover_prob") => {
            config.nsga2.crossover_prob = parse_value(section, key, value)?
        }
        ("surrogate", "hidden_size") => {
            config.surrogate.hidden_size = parse_value(section, key, value)?
        }
        ("surrogate", "head_layer1") => {
            config.surrogate.head_layer1 = parse_value(section, key, value)?
        }
        ("surrogate", "head_layer2") => {
            config.surrogate.head_layer2 = parse_value(section, key, value)?
        }
        ("surrogate", "dropout") => config.surrogate.dropout = parse_value(section, key, value)?,
        ("surrogate", "learning_rate") => {
            config.surrogate.learning_rate = parse_value(section, key, value)?
        }
        ("surrogate", "epochs") => config.surrogate.epochs = parse_value(section, key, value)?,
        ("surrogate", "patience") => config.surrogate.patience = parse_value(section, key, value)?,
        ("surrogate", "val_split") => {
            config.surrogate.val_split = parse_value(section, key, value)?
        }
        ("surrogate", "batch_size") => {
            config.surrogate.batch_size = parse_value(section, key, value)?
        }
        ("esp", "iterations") => config.esp.iterations = parse_value(section, key, value)?,
        ("esp", "init_generations") => {
            config.esp.init_generations = parse_value(section, key, value)?
        }
        ("esp", "surrogate_generations") => {
            config.esp.surrogate_generations = parse_value(section, key, value)?
        }
        ("esp", "elites") => config.esp.elites = parse_value(section, key, value)?,
        ("esp", "elite_scenarios") => {
            config.esp.elite_scenarios = parse_value(section, key, value)?
        }
        ("esp", "eval_scenarios") => config.esp.eval_scenarios = parse_value(section, key, value)?,
        ("esp", "context_windows") => {
            config.esp.context_windows = parse_value(section, key, value)?
        }
        ("esp", "scenario_pool") => config.esp.scenario_pool = parse_value(section, key, value)?,
        ("esp", "carry_population") => {
            config.esp.carry_population = parse_value(section, key, value)?
        }
        ("esp", "buffer_capacity") => {
            config.esp.buffer_capacity = parse_value(section, key, value)?
        }
        ("analysis", "top_n") => config.analysis.top_n = parse_value(section, key, value)?,
        _ => {
            let name = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            return Err(Error::Config(format!("unknown key {name}")));
        }
    }
    Ok(())
}

/// Load and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
