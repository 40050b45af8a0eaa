//! Parameter containers and the forward/backward math of the reward
//! predictor: two gated recurrent encoders whose final hidden states feed a
//! small fully connected head. Gradients are exact backpropagation through
//! time, written out by hand in double precision.
//!
//! Gate weights are stacked row-wise in the order input, forget, candidate,
//! output, so one matrix product per timestep serves all four gates.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{SurrogateConfig, WINDOW_LEN};

/// One encoder's parameters. `w_x` is (4H, in), `w_h` is (4H, H), `b` is
/// (4H); rows 0..H are the input gate, H..2H forget, 2H..3H candidate,
/// 3H..4H output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// All trainable weights of the predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub obs_encoder: LstmParams,
    pub act_encoder: LstmParams,
    /// 2H -> head1 -> head2 -> 1; ReLU plus dropout after the first two.
    pub head: Vec<DenseParams>,
}

pub(crate) enum TensorRef<'a> {
    Mat(&'a Array2<f64>),
    Vect(&'a Array1<f64>),
}

pub(crate) enum TensorMut<'a> {
    Mat(&'a mut Array2<f64>),
    Vect(&'a mut Array1<f64>),
}

impl LstmParams {
    fn glorot(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        Self {
            w_x: glorot_matrix(rng, 4 * hidden, input),
            w_h: glorot_matrix(rng, 4 * hidden, hidden),
            b: Array1::zeros(4 * hidden),
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Array2::zeros((4 * hidden, input)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w_x.ncols()
    }
}

fn glorot_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

impl NetParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(rng: &mut ChaCha8Rng, num_obs: usize, num_act: usize, cfg: &SurrogateConfig) -> Self {
        let h = cfg.hidden_size;
        let widths = [2 * h, cfg.head_layer1, cfg.head_layer2, 1];
        let head = widths
            .windows(2)
            .map(|w| DenseParams {
                w: glorot_matrix(rng, w[1], w[0]),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            obs_encoder: LstmParams::glorot(rng, num_obs, h),
            act_encoder: LstmParams::glorot(rng, num_act, h),
            head,
        }
    }

    /// All-zero parameters with the same architecture.
    pub fn zeros(num_obs: usize, num_act: usize, cfg: &SurrogateConfig) -> Self {
        let h = cfg.hidden_size;
        let widths = [2 * h, cfg.head_layer1, cfg.head_layer2, 1];
        let head = widths
            .windows(2)
            .map(|w| DenseParams {
                w: Array2::zeros((w[1], w[0])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self {
            obs_encoder: LstmParams::zeros(num_obs, h),
            act_encoder: LstmParams::zeros(num_act, h),
            head,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let zero_lstm = |p: &LstmParams| LstmParams {
            w_x: Array2::zeros(p.w_x.raw_dim()),
            w_h: Array2::zeros(p.w_h.raw_dim()),
            b: Array1::zeros(p.b.raw_dim()),
        };
        Self {
            obs_encoder: zero_lstm(&self.obs_encoder),
            act_encoder: zero_lstm(&self.act_encoder),
            head: self
                .head
                .iter()
                .map(|d| DenseParams {
                    w: Array2::zeros(d.w.raw_dim()),
                    b: Array1::zeros(d.b.raw_dim()),
                })
                .collect(),
        }
    }

    /// Canonical tensor order: obs encoder (w_x, w_h, b), act encoder
    /// (w_x, w_h, b), then each head layer (w, b).
    pub(crate) fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![
            TensorRef::Mat(&self.obs_encoder.w_x),
            TensorRef::Mat(&self.obs_encoder.w_h),
            TensorRef::Vect(&self.obs_encoder.b),
            TensorRef::Mat(&self.act_encoder.w_x),
            TensorRef::Mat(&self.act_encoder.w_h),
            TensorRef::Vect(&self.act_encoder.b),
        ];
        for d in &self.head {
            out.push(TensorRef::Mat(&d.w));
            out.push(TensorRef::Vect(&d.b));
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = vec![
            TensorMut::Mat(&mut self.obs_encoder.w_x),
            TensorMut::Mat(&mut self.obs_encoder.w_h),
            TensorMut::Vect(&mut self.obs_encoder.b),
            TensorMut::Mat(&mut self.act_encoder.w_x),
            TensorMut::Mat(&mut self.act_encoder.w_h),
            TensorMut::Vect(&mut self.act_encoder.b),
        ];
        for d in &mut self.head {
            out.push(TensorMut::Mat(&mut d.w));
            out.push(TensorMut::Vect(&mut d.b));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors()
            .iter()
            .map(|t| match t {
                TensorRef::Mat(m) => m.len(),
                TensorRef::Vect(v) => v.len(),
            })
            .sum()
    }

    /// Read one parameter by flat index over the canonical tensor order.
    pub fn get_flat(&self, index: usize) -> f64 {
        let mut idx = index;
        for t in self.tensors() {
            match t {
                TensorRef::Mat(m) => {
                    if idx < m.len() {
                        return *m.iter().nth(idx).unwrap();
                    }
                    idx -= m.len();
                }
                TensorRef::Vect(v) => {
                    if idx < v.len() {
                        return v[idx];
                    }
                    idx -= v.len();
                }
            }
        }
        panic!("flat index {index} out of range");
    }

    /// Add `delta` to one parameter by flat index.
    pub fn add_flat(&mut self, index: usize, delta: f64) {
        let mut idx = index;
        for t in self.tensors_mut() {
            match t {
                TensorMut::Mat(m) => {
                    if idx < m.len() {
                        *m.iter_mut().nth(idx).unwrap() += delta;
                        return;
                    }
                    idx -= m.len();
                }
                TensorMut::Vect(v) => {
                    if idx < v.len() {
                        v[idx] += delta;
                        return;
                    }
                    idx -= v.len();
                }
            }
        }
        panic!("flat index {index} out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| match t {
            TensorRef::Mat(m) => m.iter().all(|x| x.is_finite()),
            TensorRef::Vect(v) => v.iter().all(|x| x.is_finite()),
        })
    }
}

/// Binary dropout masks for the two hidden head layers, batch-shaped.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub mask1: Array2<f64>,
    pub mask2: Array2<f64>,
}

/// How the head's dropout behaves during a forward pass.
pub enum DropoutMode<'a> {
    /// Inference: no masks, activations scaled by the keep probability.
    Infer,
    /// Training: draw fresh binary masks from this stream.
    Sample(&'a mut ChaCha8Rng),
    /// Training with pinned masks (gradient checking).
    Fixed(&'a DropoutMasks),
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct LstmStepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    gate_i: Array2<f64>,
    gate_f: Array2<f64>,
    gate_g: Array2<f64>,
    gate_o: Array2<f64>,
    tanh_c: Array2<f64>,
}

struct LstmRun {
    steps: Vec<LstmStepCache>,
    h_final: Array2<f64>,
}

fn lstm_forward(params: &LstmParams, inputs: &[Array2<f64>], want_cache: bool) -> Result<LstmRun> {
    let hidden = params.hidden_size();
    let batch = inputs[0].nrows();
    let mut h = Array2::zeros((batch, hidden));
    let mut c: Array2<f64> = Array2::zeros((batch, hidden));
    let mut steps = Vec::with_capacity(if want_cache { inputs.len() } else { 0 });

    for x in inputs {
        let z = x.dot(&params.w_x.t()) + h.dot(&params.w_h.t()) + &params.b;
        let gate_i = z.slice(s![.., 0..hidden]).mapv(sigmoid);
        let gate_f = z.slice(s![.., hidden..2 * hidden]).mapv(sigmoid);
        let gate_g = z.slice(s![.., 2 * hidden..3 * hidden]).mapv(f64::tanh);
        let gate_o = z.slice(s![.., 3 * hidden..4 * hidden]).mapv(sigmoid);
        let c_next = &gate_f * &c + &gate_i * &gate_g;
        let tanh_c = c_next.mapv(f64::tanh);
        let h_next = &gate_o * &tanh_c;
        if !h_next.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(
                "non-finite hidden state in encoder forward pass".into(),
            ));
        }
        if want_cache {
            steps.push(LstmStepCache {
                x: x.clone(),
                h_prev: h,
                c_prev: c,
                gate_i,
                gate_f,
                gate_g,
                gate_o,
                tanh_c,
            });
        }
        h = h_next;
        c = c_next;
    }

    Ok(LstmRun { steps, h_final: h })
}

/// Accumulate one encoder's gradients and return nothing the caller needs
/// beyond them; input gradients are never used (inputs are data).
fn lstm_backward(
    params: &LstmParams,
    run: &LstmRun,
    mut dh: Array2<f64>,
    grads: &mut LstmParams,
) {
    let hidden = params.hidden_size();
    let batch = dh.nrows();
    let mut dc: Array2<f64> = Array2::zeros((batch, hidden));

    for step in run.steps.iter().rev() {
        let d_gate_o = &dh * &step.tanh_c;
        dc = dc + &dh * &step.gate_o * step.tanh_c.mapv(|t| 1.0 - t * t);
        let d_gate_i = &dc * &step.gate_g;
        let d_gate_g = &dc * &step.gate_i;
        let d_gate_f = &dc * &step.c_prev;
        let dc_prev = &dc * &step.gate_f;

        let dz_i = d_gate_i * &step.gate_i * step.gate_i.mapv(|v| 1.0 - v);
        let dz_f = d_gate_f * &step.gate_f * step.gate_f.mapv(|v| 1.0 - v);
        let dz_g = d_gate_g * step.gate_g.mapv(|v| 1.0 - v * v);
        let dz_o = d_gate_o * &step.gate_o * step.gate_o.mapv(|v| 1.0 - v);

        let mut dz = Array2::zeros((batch, 4 * hidden));
        dz.slice_mut(s![.., 0..hidden]).assign(&dz_i);
        dz.slice_mut(s![.., hidden..2 * hidden]).assign(&dz_f);
        dz.slice_mut(s![.., 2 * hidden..3 * hidden]).assign(&dz_g);
        dz.slice_mut(s![.., 3 * hidden..4 * hidden]).assign(&dz_o);

        grads.w_x = &grads.w_x + dz.t().dot(&step.x);
        grads.w_h = &grads.w_h + dz.t().dot(&step.h_prev);
        grads.b = &grads.b + dz.sum_axis(Axis(0));

        dh = dz.dot(&params.w_h);
        dc = dc_prev;
    }
}

/// Everything the backward pass needs from a training-mode forward pass.
pub struct BatchCache {
    obs_run: LstmRun,
    act_run: LstmRun,
    merged: Array2<f64>,
    z1: Array2<f64>,
    dropped1: Array2<f64>,
    z2: Array2<f64>,
    dropped2: Array2<f64>,
    pub masks: DropoutMasks,
    pub predictions: Array1<f64>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn draw_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, keep: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random_bool(keep) {
            1.0
        } else {
            0.0
        }
    })
}

/// Batched forward pass over aligned observation and action sequences.
///
/// `obs_seq` and `act_seq` hold one (batch, dim) matrix per timestep. In
/// inference mode the hidden head activations are scaled by the keep
/// probability instead of masked. The cache is returned only for training
/// modes, and is required by [`backward_batch`].
pub fn forward_batch(
    net: &NetParams,
    cfg: &SurrogateConfig,
    obs_seq: &[Array2<f64>],
    act_seq: &[Array2<f64>],
    dropout: DropoutMode<'_>,
    want_cache: bool,
) -> Result<(Array1<f64>, Option<BatchCache>)> {
    if obs_seq.len() != WINDOW_LEN || act_seq.len() != WINDOW_LEN {
        return Err(Error::Wiring(format!(
            "sequences must have length {WINDOW_LEN}, got {} and {}",
            obs_seq.len(),
            act_seq.len()
        )));
    }
    let batch = obs_seq[0].nrows();
    if obs_seq[0].ncols() != net.obs_encoder.input_size()
        || act_seq[0].ncols() != net.act_encoder.input_size()
    {
        return Err(Error::Wiring(format!(
            "input widths {}x{} do not match encoders {}x{}",
            obs_seq[0].ncols(),
            act_seq[0].ncols(),
            net.obs_encoder.input_size(),
            net.act_encoder.input_size()
        )));
    }

    let train_mode = !matches!(dropout, DropoutMode::Infer);
    let obs_run = lstm_forward(&net.obs_encoder, obs_seq, want_cache)?;
    let act_run = lstm_forward(&net.act_encoder, act_seq, want_cache)?;

    let hidden = cfg.hidden_size;
    let mut merged = Array2::zeros((batch, 2 * hidden));
    merged.slice_mut(s![.., 0..hidden]).assign(&obs_run.h_final);
    merged
        .slice_mut(s![.., hidden..2 * hidden])
        .assign(&act_run.h_final);

    let keep = 1.0 - cfg.dropout;
    let masks = match dropout {
        DropoutMode::Infer => DropoutMasks {
            mask1: Array2::zeros((0, 0)),
            mask2: Array2::zeros((0, 0)),
        },
        DropoutMode::Sample(rng) => DropoutMasks {
            mask1: draw_mask(rng, batch, cfg.head_layer1, keep),
            mask2: draw_mask(rng, batch, cfg.head_layer2, keep),
        },
        DropoutMode::Fixed(m) => m.clone(),
    };

    let z1 = merged.dot(&net.head[0].w.t()) + &net.head[0].b;
    let a1 = relu(&z1);
    let dropped1 = if train_mode { &a1 * &masks.mask1 } else { a1 * keep };

    let z2 = dropped1.dot(&net.head[1].w.t()) + &net.head[1].b;
    let a2 = relu(&z2);
    let dropped2 = if train_mode { &a2 * &masks.mask2 } else { a2 * keep };

    let z3 = dropped2.dot(&net.head[2].w.t()) + &net.head[2].b;
    let predictions = z3.column(0).to_owned();
    if !predictions.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite surrogate prediction".into()));
    }

    let cache = if want_cache {
        Some(BatchCache {
            obs_run,
            act_run,
            merged,
            z1,
            dropped1,
            z2,
            dropped2,
            masks,
            predictions: predictions.clone(),
        })
    } else {
        None
    };
    Ok((predictions, cache))
}

/// Exact gradients for the cached batch, given the loss gradient with
/// respect to each prediction.
pub fn backward_batch(
    net: &NetParams,
    cfg: &SurrogateConfig,
    cache: &BatchCache,
    d_predictions: &Array1<f64>,
) -> Result<NetParams> {
    let batch = cache.merged.nrows();
    if d_predictions.len() != batch {
        return Err(Error::Usage(format!(
            "loss gradient has {} entries for a batch of {batch}",
            d_predictions.len()
        )));
    }
    if cache.masks.mask1.nrows() != batch {
        return Err(Error::Usage(
            "backward requires a cache from a train-mode forward pass".into(),
        ));
    }
    let mut grads = net.zeros_like();
    let hidden = cfg.hidden_size;

    let dz3 = d_predictions
        .view()
        .insert_axis(Axis(1))
        .to_owned();
    grads.head[2].w = dz3.t().dot(&cache.dropped2);
    grads.head[2].b = dz3.sum_axis(Axis(0));
    let dd2 = dz3.dot(&net.head[2].w);

    let da2 = &dd2 * &cache.masks.mask2;
    let dz2 = da2 * cache.z2.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    grads.head[1].w = dz2.t().dot(&cache.dropped1);
    grads.head[1].b = dz2.sum_axis(Axis(0));
    let dd1 = dz2.dot(&net.head[1].w);

    let da1 = &dd1 * &cache.masks.mask1;
    let dz1 = da1 * cache.z1.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    grads.head[0].w = dz1.t().dot(&cache.merged);
    grads.head[0].b = dz1.sum_axis(Axis(0));
    let d_merged = dz1.dot(&net.head[0].w);

    let dh_obs = d_merged.slice(s![.., 0..hidden]).to_owned();
    let dh_act = d_merged.slice(s![.., hidden..2 * hidden]).to_owned();
    lstm_backward(&net.obs_encoder, &cache.obs_run, dh_obs, &mut grads.obs_encoder);
    lstm_backward(&net.act_encoder, &cache.act_run, dh_act, &mut grads.act_encoder);

    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{batch_from_windows, ExperienceWindow};
    use rand_chacha::rand_core::SeedableRng;

    fn small_cfg() -> SurrogateConfig {
        SurrogateConfig {
            hidden_size: 4,
            head_layer1: 6,
            head_layer2: 5,
            ..SurrogateConfig::default()
        }
    }

    fn random_window(rng: &mut ChaCha8Rng, k: usize, m: usize) -> ExperienceWindow {
        ExperienceWindow {
            obs_seq: (0..WINDOW_LEN)
                .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            act_seq: (0..WINDOW_LEN)
                .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect(),
            target: rng.random_range(-3.0..5.0),
        }
    }

    /// Independent scalar re-implementation of the whole forward pass,
    /// written gate by gate without matrices.
    fn scalar_forward(net: &NetParams, cfg: &SurrogateConfig, w: &ExperienceWindow) -> f64 {
        fn sig(z: f64) -> f64 {
            1.0 / (1.0 + (-z).exp())
        }
        fn encoder(p: &LstmParams, seq: &[Vec<f64>], hidden: usize) -> Vec<f64> {
            let mut h = vec![0.0; hidden];
            let mut c = vec![0.0; hidden];
            for x in seq {
                let mut z = vec![0.0; 4 * hidden];
                for (r, zr) in z.iter_mut().enumerate() {
                    let mut acc = p.b[r];
                    for (j, xv) in x.iter().enumerate() {
                        acc += p.w_x[[r, j]] * xv;
                    }
                    for (j, hv) in h.iter().enumerate() {
                        acc += p.w_h[[r, j]] * hv;
                    }
                    *zr = acc;
                }
                let mut h_next = vec![0.0; hidden];
                let mut c_next = vec![0.0; hidden];
                for u in 0..hidden {
                    let i = sig(z[u]);
                    let f = sig(z[hidden + u]);
                    let g = z[2 * hidden + u].tanh();
                    let o = sig(z[3 * hidden + u]);
                    c_next[u] = f * c[u] + i * g;
                    h_next[u] = o * c_next[u].tanh();
                }
                h = h_next;
                c = c_next;
            }
            h
        }

        let h_obs = encoder(&net.obs_encoder, &w.obs_seq, cfg.hidden_size);
        let h_act = encoder(&net.act_encoder, &w.act_seq, cfg.hidden_size);
        let mut layer: Vec<f64> = h_obs.into_iter().chain(h_act).collect();
        let keep = 1.0 - cfg.dropout;
        for (li, dense) in net.head.iter().enumerate() {
            let mut out = vec![0.0; dense.w.nrows()];
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = dense.b[r];
                for (j, v) in layer.iter().enumerate() {
                    acc += dense.w[[r, j]] * v;
                }
                *o = acc;
            }
            if li < net.head.len() - 1 {
                for v in out.iter_mut() {
                    *v = v.max(0.0) * keep;
                }
            }
            layer = out;
        }
        layer[0]
    }

    #[test]
    fn zero_parameters_predict_zero() {
        let cfg = small_cfg();
        let net = NetParams::zeros(3, 2, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = random_window(&mut rng, 3, 2);
        let (obs, act) = batch_from_windows(std::slice::from_ref(&w));
        let (pred, _) =
            forward_batch(&net, &cfg, &obs, &act, DropoutMode::Infer, false).unwrap();
        assert_eq!(pred[0], 0.0);
        let mut mask_rng = ChaCha8Rng::seed_from_u64(1);
        let (pred_train, _) = forward_batch(
            &net,
            &cfg,
            &obs,
            &act,
            DropoutMode::Sample(&mut mask_rng),
            true,
        )
        .unwrap();
        assert_eq!(pred_train[0], 0.0);
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NetParams::init(&mut rng, 3, 2, &cfg);
        let w = random_window(&mut rng, 3, 2);
        let (obs, act) = batch_from_windows(std::slice::from_ref(&w));
        let (a, _) = forward_batch(&net, &cfg, &obs, &act, DropoutMode::Infer, false).unwrap();
        let (b, _) = forward_batch(&net, &cfg, &obs, &act, DropoutMode::Infer, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matches_the_scalar_recurrence_oracle() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let net = NetParams::init(&mut rng, 3, 2, &cfg);
            let w = random_window(&mut rng, 3, 2);
            let (obs, act) = batch_from_windows(std::slice::from_ref(&w));
            let (pred, _) =
                forward_batch(&net, &cfg, &obs, &act, DropoutMode::Infer, false).unwrap();
            let oracle = scalar_forward(&net, &cfg, &w);
            assert!(
                (pred[0] - oracle).abs() < 1e-10,
                "batched {} vs oracle {}",
                pred[0],
                oracle
            );
        }
    }

    #[test]
    fn zero_loss_means_zero_gradients() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = NetParams::init(&mut rng, 3, 2, &cfg);
        let w = random_window(&mut rng, 3, 2);
        let (obs, act) = batch_from_windows(std::slice::from_ref(&w));
        let mut mask_rng = ChaCha8Rng::seed_from_u64(6);
        let (_, cache) = forward_batch(
            &net,
            &cfg,
            &obs,
            &act,
            DropoutMode::Sample(&mut mask_rng),
            true,
        )
        .unwrap();
        let cache = cache.unwrap();
        let grads = backward_batch(&net, &cfg, &cache, &Array1::zeros(1)).unwrap();
        for t in grads.tensors() {
            match t {
                TensorRef::Mat(m) => assert!(m.iter().all(|v| *v == 0.0)),
                TensorRef::Vect(v) => assert!(v.iter().all(|x| *x == 0.0)),
            }
        }
    }

    #[test]
    fn duplicated_sample_doubles_the_gradient() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = NetParams::init(&mut rng, 3, 2, &cfg);
        let w = random_window(&mut rng, 3, 2);

        let (obs1, act1) = batch_from_windows(std::slice::from_ref(&w));
        let masks_once = {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(8);
            let (_, cache) = forward_batch(
                &net,
                &cfg,
                &obs1,
                &act1,
                DropoutMode::Sample(&mut mask_rng),
                true,
            )
            .unwrap();
            cache.unwrap().masks
        };
        let (_, cache1) = forward_batch(
            &net,
            &cfg,
            &obs1,
            &act1,
            DropoutMode::Fixed(&masks_once),
            true,
        )
        .unwrap();
        let cache1 = cache1.unwrap();
        let residual = cache1.predictions[0] - w.target;
        let g1 = backward_batch(&net, &cfg, &cache1, &Array1::from(vec![residual])).unwrap();

        let pair = vec![w.clone(), w.clone()];
        let (obs2, act2) = batch_from_windows(&pair);
        let masks_pair = DropoutMasks {
            mask1: ndarray::concatenate(
                Axis(0),
                &[masks_once.mask1.view(), masks_once.mask1.view()],
            )
            .unwrap(),
            mask2: ndarray::concatenate(
                Axis(0),
                &[masks_once.mask2.view(), masks_once.mask2.view()],
            )
            .unwrap(),
        };
        let (_, cache2) = forward_batch(
            &net,
            &cfg,
            &obs2,
            &act2,
            DropoutMode::Fixed(&masks_pair),
            true,
        )
        .unwrap();
        let cache2 = cache2.unwrap();
        let g2 = backward_batch(
            &net,
            &cfg,
            &cache2,
            &Array1::from(vec![residual, residual]),
        )
        .unwrap();

        for (a, b) in g1.tensors().iter().zip(g2.tensors().iter()) {
            match (a, b) {
                (TensorRef::Mat(x), TensorRef::Mat(y)) => {
                    for (xa, yb) in x.iter().zip(y.iter()) {
                        assert!((2.0 * xa - yb).abs() < 1e-12);
                    }
                }
                (TensorRef::Vect(x), TensorRef::Vect(y)) => {
                    for (xa, yb) in x.iter().zip(y.iter()) {
                        assert!((2.0 * xa - yb).abs() < 1e-12);
                    }
                }
                _ => panic!("tensor shape mismatch"),
            }
        }
    }

    #[test]
    fn backward_rejects_an_inference_cache() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = NetParams::init(&mut rng, 3, 2, &cfg);
        let w = random_window(&mut rng, 3, 2);
        let (obs, act) = batch_from_windows(std::slice::from_ref(&w));
        let (_, cache) =
            forward_batch(&net, &cfg, &obs, &act, DropoutMode::Infer, true).unwrap();
        let err = backward_batch(&net, &cfg, &cache.unwrap(), &Array1::zeros(1)).unwrap_err();
        assert!(matches!(err, crate::error::Error::Usage(_)));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = NetParams::init(&mut rng, 3, 2, &cfg);
        let w = random_window(&mut rng, 3, 2);
        let (obs, act) = batch_from_windows(std::slice::from_ref(&w));

        let mut mask_rng = ChaCha8Rng::seed_from_u64(12);
        let (_, cache) = forward_batch(
            &net,
            &cfg,
            &obs,
            &act,
            DropoutMode::Sample(&mut mask_rng),
            true,
        )
        .unwrap();
        let cache = cache.unwrap();
        let masks = cache.masks.clone();
        let residual = cache.predictions[0] - w.target;
        let grads = backward_batch(&net, &cfg, &cache, &Array1::from(vec![residual])).unwrap();

        let loss = |p: &NetParams| -> f64 {
            let (pred, _) =
                forward_batch(p, &cfg, &obs, &act, DropoutMode::Fixed(&masks), false).unwrap();
            0.5 * (pred[0] - w.target).powi(2)
        };

        let h = 1e-5;
        let n = net.param_count();
        let mut worst: f64 = 0.0;
        for idx in 0..n {
            let mut plus = net.clone();
            plus.add_flat(idx, h);
            let mut minus = net.clone();
            minus.add_flat(idx, -h);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grads.get_flat(idx);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
            assert!(
                rel <= 1e-4,
                "param {idx}: analytic {analytic} vs numeric {numeric} (rel {rel})"
            );
        }
        assert!(worst <= 1e-4);
    }
}
