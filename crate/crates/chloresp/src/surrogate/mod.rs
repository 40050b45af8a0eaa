//! The learned reward predictor.
//!
//! Windows of ten consecutive (observation, action) pairs are encoded by two
//! recurrent encoders; their final hidden states are merged and passed
//! through fully connected layers (ReLU, dropout 0.2) onto a single linear
//! output that predicts the concentration-dependent reward component
//! (penalty + bonus) at the window's final step. The injection cost part of
//! the reward is never predicted: it is an exact function of the actions.
//!
//! Training is mini-batch Adam on squared error with a validation split and
//! early stopping; the parameters returned are always the best-validation
//! checkpoint.

mod adam;
mod net;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use net::{
    backward_batch, forward_batch, BatchCache, DenseParams, DropoutMasks, DropoutMode,
    LstmParams, NetParams,
};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::neat::{self, Genome};
use crate::reward::ObjectiveVector;

/// Sequence length of every experience window.
pub const WINDOW_LEN: usize = 10;

/// Ten timesteps of aligned observations and actions plus the training
/// target: the concentration reward component at the final step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceWindow {
    pub obs_seq: Vec<Vec<f64>>,
    pub act_seq: Vec<Vec<f64>>,
    pub target: f64,
}

impl ExperienceWindow {
    pub fn validate(&self, num_obs: usize, num_act: usize) -> Result<()> {
        if self.obs_seq.len() != WINDOW_LEN || self.act_seq.len() != WINDOW_LEN {
            return Err(Error::Data(format!(
                "window length must be {WINDOW_LEN}, got {} obs / {} act",
                self.obs_seq.len(),
                self.act_seq.len()
            )));
        }
        if self.obs_seq.iter().any(|o| o.len() != num_obs)
            || self.act_seq.iter().any(|a| a.len() != num_act)
        {
            return Err(Error::Data(format!(
                "window arity mismatch: expected {num_obs} obs / {num_act} act"
            )));
        }
        if !self.target.is_finite() {
            return Err(Error::Data("window target is not finite".into()));
        }
        Ok(())
    }
}

/// Slide a trajectory into overlapping windows; a T-step episode yields
/// T - 9 windows, none when T < 10.
pub fn windows_from_trajectory(traj: &Trajectory) -> Vec<ExperienceWindow> {
    let t = traj.steps.len();
    if t < WINDOW_LEN {
        return Vec::new();
    }
    (0..=t - WINDOW_LEN)
        .map(|start| {
            let slice = &traj.steps[start..start + WINDOW_LEN];
            ExperienceWindow {
                obs_seq: slice.iter().map(|s| s.obs.clone()).collect(),
                act_seq: slice.iter().map(|s| s.action.clone()).collect(),
                target: slice[WINDOW_LEN - 1].reward.concentration_component(),
            }
        })
        .collect()
}

/// Stack windows into per-timestep (batch, dim) matrices.
pub fn batch_from_windows(windows: &[ExperienceWindow]) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let batch = windows.len();
    let num_obs = windows.first().map_or(0, |w| w.obs_seq[0].len());
    let num_act = windows.first().map_or(0, |w| w.act_seq[0].len());
    let mut obs = Vec::with_capacity(WINDOW_LEN);
    let mut act = Vec::with_capacity(WINDOW_LEN);
    for t in 0..WINDOW_LEN {
        obs.push(Array2::from_shape_fn((batch, num_obs), |(b, j)| {
            windows[b].obs_seq[t][j]
        }));
        act.push(Array2::from_shape_fn((batch, num_act), |(b, j)| {
            windows[b].act_seq[t][j]
        }));
    }
    (obs, act)
}

/// Architecture and training knobs, the `[surrogate]` config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub hidden_size: usize,
    pub head_layer1: usize,
    pub head_layer2: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub val_split: f64,
    pub batch_size: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            head_layer1: 64,
            head_layer2: 32,
            dropout: 0.2,
            learning_rate: 1e-3,
            epochs: 50,
            patience: 5,
            val_split: 0.2,
            batch_size: 32,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size < 1 || self.head_layer1 < 1 || self.head_layer2 < 1 {
            return Err(Error::Config("surrogate layer sizes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("surrogate.dropout must be in [0, 1)".into()));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::Config("surrogate.learning_rate must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("surrogate.epochs must be >= 1".into()));
        }
        if self.val_split <= 0.0 || self.val_split >= 1.0 || self.val_split.is_nan() {
            return Err(Error::Config("surrogate.val_split must be in (0, 1)".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("surrogate.batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Predictor weights together with their optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub net: NetParams,
    pub adam: AdamState,
}

impl SurrogateParams {
    pub fn init(rng: &mut ChaCha8Rng, num_obs: usize, num_act: usize, cfg: &SurrogateConfig) -> Self {
        let net = NetParams::init(rng, num_obs, num_act, cfg);
        let adam = AdamState::new(&net);
        Self { net, adam }
    }

    pub fn zeros(num_obs: usize, num_act: usize, cfg: &SurrogateConfig) -> Self {
        let net = NetParams::zeros(num_obs, num_act, cfg);
        let adam = AdamState::new(&net);
        Self { net, adam }
    }
}

/// Single-window forward pass; train modes also return the cache.
pub fn forward_window(
    net: &NetParams,
    cfg: &SurrogateConfig,
    window: &ExperienceWindow,
    dropout: DropoutMode<'_>,
) -> Result<(f64, Option<BatchCache>)> {
    let want_cache = !matches!(dropout, DropoutMode::Infer);
    let (obs, act) = batch_from_windows(std::slice::from_ref(window));
    let (preds, cache) = forward_batch(net, cfg, &obs, &act, dropout, want_cache)?;
    Ok((preds[0], cache))
}

/// Gradient of 0.5 * (prediction - target)^2 for a cached single window.
pub fn backward_window(
    net: &NetParams,
    cfg: &SurrogateConfig,
    cache: &BatchCache,
    target: f64,
) -> Result<NetParams> {
    let residual = cache.predictions[0] - target;
    backward_batch(net, cfg, cache, &Array1::from(vec![residual]))
}

/// Per-epoch record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub stopped_early: bool,
    /// Zero-based index of the epoch whose checkpoint was returned.
    pub best_epoch: usize,
}

fn batch_by_indices(dataset: &[ExperienceWindow], idx: &[usize]) -> Vec<ExperienceWindow> {
    idx.iter().map(|&i| dataset[i].clone()).collect()
}

fn validation_mse(
    net: &NetParams,
    cfg: &SurrogateConfig,
    dataset: &[ExperienceWindow],
    idx: &[usize],
) -> Result<f64> {
    let mut sq_sum = 0.0;
    for chunk in idx.chunks(cfg.batch_size) {
        let windows = batch_by_indices(dataset, chunk);
        let (obs, act) = batch_from_windows(&windows);
        let (preds, _) = forward_batch(net, cfg, &obs, &act, DropoutMode::Infer, false)?;
        for (p, w) in preds.iter().zip(windows.iter()) {
            sq_sum += (p - w.target).powi(2);
        }
    }
    Ok(sq_sum / idx.len() as f64)
}

/// Fit the predictor on `dataset` with mini-batch Adam and early stopping.
///
/// The optimizer state is reset at the start of each call; parameters are
/// rolled back to the best-validation epoch before returning. Training stops
/// once validation MSE has failed to improve for `patience` consecutive
/// epochs or the epoch cap is reached.
pub fn train(
    params: &mut SurrogateParams,
    dataset: &[ExperienceWindow],
    cfg: &SurrogateConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.len() < 10 {
        return Err(Error::Data(format!(
            "training needs at least 10 windows, got {}",
            dataset.len()
        )));
    }

    params.adam = AdamState::new(&params.net);

    let n = dataset.len();
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let val_count = ((n as f64 * cfg.val_split).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = indices.split_at(val_count);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut report = TrainReport {
        epochs_run: 0,
        train_mse: Vec::new(),
        validation_mse: Vec::new(),
        stopped_early: false,
        best_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_net = params.net.clone();
    let mut epochs_without_improvement = 0usize;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(rng);
        let mut sq_sum = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let windows = batch_by_indices(dataset, chunk);
            let (obs, act) = batch_from_windows(&windows);
            let (preds, cache) =
                forward_batch(&params.net, cfg, &obs, &act, DropoutMode::Sample(rng), true)?;
            let cache = cache.expect("train-mode forward returns a cache");
            let batch = chunk.len() as f64;
            let mut d_preds = Array1::zeros(chunk.len());
            for (i, (p, w)) in preds.iter().zip(windows.iter()).enumerate() {
                let residual = p - w.target;
                sq_sum += residual * residual;
                d_preds[i] = residual / batch;
            }
            let grads = backward_batch(&params.net, cfg, &cache, &d_preds)?;
            adam_step(&mut params.net, &mut params.adam, &grads, cfg.learning_rate);
        }
        report.train_mse.push(sq_sum / train_idx.len() as f64);

        let val = validation_mse(&params.net, cfg, dataset, &val_idx)?;
        report.validation_mse.push(val);
        report.epochs_run = epoch + 1;

        if val < best_val {
            best_val = val;
            best_net = params.net.clone();
            report.best_epoch = epoch;
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
        }
        if epochs_without_improvement >= cfg.patience {
            report.stopped_early = report.epochs_run < cfg.epochs;
            break;
        }
    }

    params.net = best_net;
    Ok(report)
}

/// Score a prescriptor through the surrogate.
///
/// Each context window's observations are mapped to actions by the genome
/// and the surrogate predicts the concentration reward component at the
/// window's final step. The prediction is mapped onto the violation-fraction
/// scale: the bonus term of the reward is 5 times the in-band node fraction,
/// so `1 - clamp(p / 5, 0, 1)` reads a predicted component as a predicted
/// out-of-band fraction (negative penalty only pushes it higher). Keeping
/// this objective on the same scale as real rollout violations is what lets
/// environment-evaluated elites and surrogate-scored individuals share one
/// ranking. The cost objective is analytic: mean per-step injection over the
/// window scaled to the episode length.
pub fn predict_fitness(
    net: &NetParams,
    cfg: &SurrogateConfig,
    prescriptor: &Genome,
    contexts: &[Vec<Vec<f64>>],
    episode_length: usize,
) -> Result<ObjectiveVector> {
    if contexts.is_empty() {
        return Err(Error::Data("predict_fitness needs at least one context".into()));
    }

    let mut windows = Vec::with_capacity(contexts.len());
    let mut step_cost_sum = 0.0;
    for obs_seq in contexts {
        if obs_seq.len() != WINDOW_LEN {
            return Err(Error::Data(format!(
                "context window must have {WINDOW_LEN} steps, got {}",
                obs_seq.len()
            )));
        }
        let mut act_seq = Vec::with_capacity(WINDOW_LEN);
        for obs in obs_seq {
            let action = neat::activate(prescriptor, obs)?;
            step_cost_sum += action.iter().sum::<f64>();
            act_seq.push(action);
        }
        windows.push(ExperienceWindow {
            obs_seq: obs_seq.clone(),
            act_seq,
            target: 0.0,
        });
    }

    let (obs, act) = batch_from_windows(&windows);
    let (preds, _) = forward_batch(net, cfg, &obs, &act, DropoutMode::Infer, false)?;

    let violation = preds
        .iter()
        .map(|p| 1.0 - (p / crate::reward::BONUS_SCALE).clamp(0.0, 1.0))
        .sum::<f64>()
        / contexts.len() as f64;

    let mean_step_cost = step_cost_sum / (contexts.len() * WINDOW_LEN) as f64;
    let cost = mean_step_cost * episode_length as f64;

    Ok(ObjectiveVector { violation, cost })
}
