//! Seeded desk-scale chlorination environment.
//!
//! A K-node network where each step mixes concentrations through a
//! row-stochastic matrix, applies first-order decay modulated by a diurnal
//! demand term, and adds chlorine at the injection nodes:
//!
//! ```text
//! c(t+1) = clamp( d(t) * (W c(t)) + B a(t), 0, C_MAX )
//! d(t)   = d0 * (1 - demand_amplitude * sin(2*pi*t/24 + phase))
//! ```
//!
//! Scenarios are values: the same seed and config always produce the same
//! scenario, and `step`/`rollout` are pure functions of their inputs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neat::Genome;
use crate::reward::{self, RewardComponents};

/// Concentration ceiling, mg/L.
pub const C_MAX: f64 = 2.0;
/// Injection action ceiling, unit rate.
pub const A_MAX: f64 = 1.0;
/// Period of the diurnal demand modulation, timesteps.
pub const DEMAND_PERIOD: f64 = 24.0;

/// Environment parameters, the `[env]` section of the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Number of network nodes K.
    pub num_nodes: usize,
    /// Number of injection nodes M.
    pub num_injections: usize,
    /// Episode horizon T.
    pub episode_length: usize,
    /// Base decay factor d0, in (0, 1).
    pub decay_base: f64,
    /// Demand modulation amplitude, in [0, 0.5).
    pub demand_amplitude: f64,
    /// Scale of the uniform perturbation added to the identity before
    /// row-normalizing the mixing matrix. Zero keeps W = I.
    pub mixing_perturbation: f64,
    /// Concentration added per unit action at an injection node, (mg/L)/unit.
    pub injection_gain: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_nodes: 5,
            num_injections: 2,
            episode_length: 48,
            decay_base: 0.9,
            demand_amplitude: 0.1,
            mixing_perturbation: 0.2,
            injection_gain: 0.5,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 1 {
            return Err(Error::Config("env.num_nodes must be >= 1".into()));
        }
        if self.num_injections < 1 || self.num_injections > self.num_nodes {
            return Err(Error::Config(
                "env.num_injections must be in [1, num_nodes]".into(),
            ));
        }
        if self.episode_length < 1 {
            return Err(Error::Config("env.episode_length must be >= 1".into()));
        }
        if !(self.decay_base > 0.0 && self.decay_base < 1.0) {
            return Err(Error::Config("env.decay_base must be in (0, 1)".into()));
        }
        if !(0.0..0.5).contains(&self.demand_amplitude) {
            return Err(Error::Config(
                "env.demand_amplitude must be in [0, 0.5)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mixing_perturbation) {
            return Err(Error::Config(
                "env.mixing_perturbation must be in [0, 1]".into(),
            ));
        }
        if self.injection_gain <= 0.0 || !self.injection_gain.is_finite() {
            return Err(Error::Config("env.injection_gain must be > 0".into()));
        }
        Ok(())
    }
}

/// A fully resolved, seeded environment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub num_nodes: usize,
    pub injection_nodes: Vec<usize>,
    pub episode_length: usize,
    pub decay_base: f64,
    pub demand_amplitude: f64,
    pub demand_phase: f64,
    /// Row-stochastic K x K mixing matrix, row-major.
    pub mixing_matrix: Vec<Vec<f64>>,
    pub injection_gain: f64,
    pub initial_concentrations: Vec<f64>,
}

impl Scenario {
    pub fn initial_state(&self) -> EnvState {
        EnvState {
            t: 0,
            concentrations: self.initial_concentrations.clone(),
        }
    }

    pub fn num_injections(&self) -> usize {
        self.injection_nodes.len()
    }
}

/// Concentrations at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub t: usize,
    pub concentrations: Vec<f64>,
}

/// Injection rates for one timestep, clamped into [0, A_MAX] per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub injections: Vec<f64>,
}

impl Action {
    pub fn new(raw: Vec<f64>) -> Self {
        Self {
            injections: raw.into_iter().map(|a| a.clamp(0.0, A_MAX)).collect(),
        }
    }
}

/// One recorded step: the observation the prescriptor saw, the action it
/// took, and the reward evaluated on the post-step concentrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: RewardComponents,
    /// Nodes outside the regulatory band after this step.
    pub violations: usize,
}

/// A full episode record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub num_nodes: usize,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// Sum of per-step composite rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward.total).sum()
    }
}

/// Build the scenario a seed and config describe.
///
/// Derivation order from the seeded stream is fixed: demand phase, injection
/// nodes, mixing-matrix perturbations (row-major), initial concentrations.
pub fn make_scenario(seed: u64, config: &EnvConfig) -> Result<Scenario> {
    config.validate()?;
    let k = config.num_nodes;
    let m = config.num_injections;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let demand_phase = rng.random_range(0.0..std::f64::consts::TAU);

    let injection_nodes = {
        let mut picked = Vec::with_capacity(m);
        let mut available: Vec<usize> = (0..k).collect();
        for _ in 0..m {
            let idx = rng.random_range(0..available.len());
            picked.push(available.swap_remove(idx));
        }
        picked.sort_unstable();
        picked
    };

    let mut mixing_matrix = vec![vec![0.0; k]; k];
    for (i, row) in mixing_matrix.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let base = if i == j { 1.0 } else { 0.0 };
            let perturb = if config.mixing_perturbation > 0.0 {
                rng.random_range(0.0..config.mixing_perturbation)
            } else {
                0.0
            };
            *w = base + perturb;
        }
        let sum: f64 = row.iter().sum();
        for w in row.iter_mut() {
            *w /= sum;
        }
    }

    let initial_concentrations = (0..k).map(|_| rng.random_range(0.0..=0.5)).collect();

    Ok(Scenario {
        seed,
        num_nodes: k,
        injection_nodes,
        episode_length: config.episode_length,
        decay_base: config.decay_base,
        demand_amplitude: config.demand_amplitude,
        demand_phase,
        mixing_matrix,
        injection_gain: config.injection_gain,
        initial_concentrations,
    })
}

/// Decay factor at timestep `t`.
fn decay_at(scenario: &Scenario, t: usize) -> f64 {
    let angle = std::f64::consts::TAU * t as f64 / DEMAND_PERIOD + scenario.demand_phase;
    scenario.decay_base * (1.0 - scenario.demand_amplitude * angle.sin())
}

/// Advance the environment one timestep.
pub fn step(scenario: &Scenario, state: &EnvState, action: &Action) -> Result<EnvState> {
    if state.t >= scenario.episode_length {
        return Err(Error::EpisodeFinished {
            t: state.t,
            horizon: scenario.episode_length,
        });
    }
    let k = scenario.num_nodes;
    debug_assert_eq!(state.concentrations.len(), k);

    let d = decay_at(scenario, state.t);
    let mut next = vec![0.0; k];
    for (i, row) in scenario.mixing_matrix.iter().enumerate() {
        let mixed: f64 = row
            .iter()
            .zip(state.concentrations.iter())
            .map(|(w, c)| w * c)
            .sum();
        next[i] = d * mixed;
    }
    for (j, &node) in scenario.injection_nodes.iter().enumerate() {
        next[node] += scenario.injection_gain * action.injections[j];
    }
    for c in next.iter_mut() {
        *c = c.clamp(0.0, C_MAX);
    }

    Ok(EnvState {
        t: state.t + 1,
        concentrations: next,
    })
}

/// Run a prescriptor for a full episode and record everything.
///
/// The observation at step t is c(t); the reward is evaluated on the
/// post-step concentrations c(t+1) together with the action taken, so the
/// action's effect is visible in the same step's reward.
pub fn rollout(scenario: &Scenario, prescriptor: &Genome) -> Result<Trajectory> {
    let k = scenario.num_nodes;
    let m = scenario.num_injections();
    if prescriptor.input_count() != k || prescriptor.output_count() != m {
        return Err(Error::Wiring(format!(
            "genome {} has arity {}->{} but scenario needs {}->{}",
            prescriptor.id,
            prescriptor.input_count(),
            prescriptor.output_count(),
            k,
            m
        )));
    }

    let mut state = scenario.initial_state();
    let mut steps = Vec::with_capacity(scenario.episode_length);
    for t in 0..scenario.episode_length {
        let obs = state.concentrations.clone();
        let action = Action::new(crate::neat::activate(prescriptor, &obs)?);
        let next = step(scenario, &state, &action)?;
        let reward = reward::timestep_reward(&next.concentrations, &action.injections)?;
        let violations = reward::out_of_band_count(&next.concentrations);
        steps.push(TrajectoryStep {
            t,
            obs,
            action: action.injections,
            reward,
            violations,
        });
        state = next;
    }

    Ok(Trajectory {
        num_nodes: k,
        steps,
    })
}
