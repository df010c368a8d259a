//! Minimal feedforward networks with manual backpropagation.
//!
//! Two shapes live here: a plain single-output [`Mlp`] used as a regression
//! or classification backend, and the [`SharedNuisanceNet`] that predicts all
//! six nuisance functions from shared representations. The trunk
//! representation is shared across data sources and feeds the group head;
//! per-group branches share representations across treatment arms, and the
//! observational branch adds a representation shared between short- and
//! long-term outcome heads.
//!
//! Training is plain SGD with optional momentum. The multi-task loss is
//! masked: each head only receives gradient from rows that supervise it, and
//! each head's loss is averaged over its own supervised row count.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dataset::{Group, PanelDataset, Row};

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid mlp config: {0}")]
    BadConfig(String),
    #[error("input has dimension {got}, network expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("non-finite loss at epoch {epoch}, step {step} (loss {loss})")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("training data is empty")]
    EmptyTrainingData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Network and optimizer hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    /// Hidden layer widths; empty means a bare affine map.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    /// Momentum coefficient; 0 disables it.
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Dropout on trunk layers only, disabled at inference.
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            widths: vec![32, 32],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 64,
            dropout: 0.0,
            epochs: 30,
            seed: 0,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<(), MlpError> {
        if self.widths.iter().any(|w| *w == 0) {
            return Err(MlpError::BadConfig("layer widths must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(MlpError::BadConfig("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MlpError::BadConfig("dropout must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(MlpError::BadConfig("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MlpError::BadConfig("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One affine layer, weights stored row-major (n_out x n_in).
#[derive(Debug, Clone)]
struct Layer {
    w: Vec<f64>,
    b: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl Layer {
    fn init(n_in: usize, n_out: usize, rng: &mut ChaCha12Rng) -> Self {
        let scale = (2.0 / n_in as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Layer { w, b: vec![0.0; n_out], n_in, n_out }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let z = self.b[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            out.push(z);
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => z.max(0.0),
        Activation::Identity => z,
    }
}

fn activate_grad(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Identity => 1.0,
    }
}

fn sigmoid(z: f64) -> f64 {
    crate::regress::sigmoid(z)
}

fn bce_loss(z: f64, target: f64) -> f64 {
    // log(1 + e^z) - target * z, stable in both tails
    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    softplus - target * z
}

/// A stack of layers with an activation between them; the data structure
/// behind both network shapes.
#[derive(Debug, Clone)]
struct Stack {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Forward cache for one stack on one input.
#[derive(Debug, Clone, Default)]
struct StackCache {
    /// Pre-activation outputs per layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation (and post-dropout) outputs per layer.
    act: Vec<Vec<f64>>,
    /// Dropout scale per unit per layer; empty when dropout is off.
    drop: Vec<Vec<f64>>,
}

impl Stack {
    fn new(n_in: usize, widths: &[usize], activation: Activation, rng: &mut ChaCha12Rng) -> Self {
        let mut layers = Vec::new();
        let mut prev = n_in;
        for &w in widths {
            layers.push(Layer::init(prev, w, rng));
            prev = w;
        }
        Stack { layers, activation }
    }

    fn out_dim(&self, n_in: usize) -> usize {
        self.layers.last().map_or(n_in, |l| l.n_out)
    }

    fn forward(
        &self,
        input: &[f64],
        dropout: f64,
        rng: Option<&mut ChaCha12Rng>,
        cache: &mut StackCache,
    ) {
        cache.pre.clear();
        cache.act.clear();
        cache.drop.clear();
        let mut rng = rng;
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::new();
            layer.forward(&current, &mut pre);
            let mut act: Vec<f64> = pre.iter().map(|z| activate(self.activation, *z)).collect();
            if dropout > 0.0 {
                let rng = rng.as_deref_mut().expect("dropout requires an rng");
                let keep = 1.0 - dropout;
                let mask: Vec<f64> = act
                    .iter()
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                for (a, m) in act.iter_mut().zip(&mask) {
                    *a *= m;
                }
                cache.drop.push(mask);
            }
            cache.pre.push(pre);
            current = act.clone();
            cache.act.push(act);
        }
    }

    /// Backpropagates `grad_out` (gradient on the stack output) using the
    /// cache, accumulating parameter gradients into `grads` starting at
    /// `offset`, and returns the gradient on the stack input.
    fn backward(
        &self,
        input: &[f64],
        cache: &StackCache,
        grad_out: &[f64],
        grads: &mut [f64],
        offset: usize,
    ) -> Vec<f64> {
        let mut grad = grad_out.to_vec();
        // Offsets of each layer's parameter block.
        let mut layer_offsets = Vec::with_capacity(self.layers.len());
        let mut cursor = offset;
        for layer in &self.layers {
            layer_offsets.push(cursor);
            cursor += layer.n_params();
        }
        for (li, layer) in self.layers.iter().enumerate().rev() {
            // undo dropout scaling
            if !cache.drop.is_empty() {
                for (g, m) in grad.iter_mut().zip(&cache.drop[li]) {
                    *g *= m;
                }
            }
            // through the activation
            for (g, z) in grad.iter_mut().zip(&cache.pre[li]) {
                *g *= activate_grad(self.activation, *z);
            }
            let below: &[f64] = if li == 0 { input } else { &cache.act[li - 1] };
            let base = layer_offsets[li];
            let mut grad_in = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let go = grad[o];
                let wrow = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for i in 0..layer.n_in {
                    grads[base + o * layer.n_in + i] += go * below[i];
                    grad_in[i] += go * wrow[i];
                }
                grads[base + layer.w.len() + o] += go;
            }
            grad = grad_in;
        }
        grad
    }

    fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
    }

    fn read_params(&mut self, params: &[f64], cursor: &mut usize) {
        for layer in &mut self.layers {
            let lw = layer.w.len();
            layer.w.copy_from_slice(&params[*cursor..*cursor + lw]);
            *cursor += lw;
            let lb = layer.b.len();
            layer.b.copy_from_slice(&params[*cursor..*cursor + lb]);
            *cursor += lb;
        }
    }

    /// Sum of squared weights (biases excluded), for weight decay.
    fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().map(|l| l.w.iter().map(|w| w * w).sum::<f64>()).sum()
    }

    /// Adds `wd * w` to the weight gradients (biases untouched).
    fn add_decay(&self, wd: f64, grads: &mut [f64], offset: usize) {
        let mut cursor = offset;
        for layer in &self.layers {
            for (slot, w) in grads[cursor..cursor + layer.w.len()].iter_mut().zip(&layer.w) {
                *slot += wd * w;
            }
            cursor += layer.n_params();
        }
    }
}

/// Input/target standardization applied inside the networks.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
}

impl NormStats {
    pub fn identity(d: usize) -> Self {
        NormStats { x_mean: vec![0.0; d], x_std: vec![1.0; d] }
    }

    pub fn from_rows(xs: &[&[f64]], d: usize) -> Self {
        let n = xs.len().max(1);
        let mut mean = vec![0.0; d];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(*x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; d];
        for x in xs {
            for j in 0..d {
                var[j] += (x[j] - mean[j]) * (x[j] - mean[j]);
            }
        }
        let std = var
            .iter()
            .map(|v| (v / n as f64).sqrt().max(1e-8))
            .collect();
        NormStats { x_mean: mean, x_std: std }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for j in 0..x.len() {
            out.push((x[j] - self.x_mean[j]) / self.x_std[j]);
        }
    }
}

// ---------------------------------------------------------------------------
// Plain single-output MLP
// ---------------------------------------------------------------------------

/// Single-output feedforward network, regression or binary classification.
#[derive(Debug, Clone)]
pub struct Mlp {
    stack: Stack,
    head: Layer,
    sigmoid_output: bool,
    clip: f64,
    norm: NormStats,
    y_mean: f64,
    y_std: f64,
}

impl Mlp {
    fn new(d: usize, config: &MlpConfig, sigmoid_output: bool, clip: f64, norm: NormStats) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let stack = Stack::new(d, &config.widths, config.activation, &mut rng);
        let rep = stack.out_dim(d);
        let head = Layer::init(rep, 1, &mut rng);
        Mlp {
            stack,
            head,
            sigmoid_output,
            clip,
            norm,
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    /// Deterministic scalar prediction (dropout off).
    pub fn predict_scalar(&self, x: &[f64]) -> f64 {
        let mut xs = Vec::with_capacity(x.len());
        self.norm.apply(x, &mut xs);
        let mut cache = StackCache::default();
        self.stack.forward(&xs, 0.0, None, &mut cache);
        let rep: &[f64] = cache.act.last().map_or(&xs, |a| a);
        let mut out = Vec::with_capacity(1);
        self.head.forward(rep, &mut out);
        if self.sigmoid_output {
            crate::regress::clamp_prob(sigmoid(out[0]), self.clip)
        } else {
            self.y_mean + self.y_std * out[0]
        }
    }

    fn loss_and_grad(
        &self,
        x: &[f64],
        d: usize,
        y: &[f64],
        wd: f64,
        grads: Option<&mut [f64]>,
    ) -> f64 {
        let n = y.len();
        let mut loss = 0.0;
        let mut grads = grads;
        let head_offset = self.stack.n_params();
        let mut xs = Vec::new();
        let mut cache = StackCache::default();
        let mut out = Vec::new();
        for i in 0..n {
            self.norm.apply(&x[i * d..(i + 1) * d], &mut xs);
            self.stack.forward(&xs, 0.0, None, &mut cache);
            let rep: Vec<f64> = cache.act.last().cloned().unwrap_or_else(|| xs.clone());
            self.head.forward(&rep, &mut out);
            let z = out[0];
            let (l, dz) = if self.sigmoid_output {
                (bce_loss(z, y[i]), sigmoid(z) - y[i])
            } else {
                let t = (y[i] - self.y_mean) / self.y_std;
                ((z - t) * (z - t), 2.0 * (z - t))
            };
            loss += l / n as f64;
            if let Some(g) = grads.as_deref_mut() {
                let scale = dz / n as f64;
                let mut grad_rep = vec![0.0; rep.len()];
                for j in 0..rep.len() {
                    g[head_offset + j] += scale * rep[j];
                    grad_rep[j] = scale * self.head.w[j];
                }
                g[head_offset + self.head.w.len()] += scale;
                self.stack.backward(&xs, &cache, &grad_rep, g, 0);
            }
        }
        loss += 0.5
            * wd
            * (self.stack.weight_norm_sq() + self.head.w.iter().map(|w| w * w).sum::<f64>());
        if let Some(g) = grads.as_deref_mut() {
            self.stack.add_decay(wd, g, 0);
            for (slot, w) in g[head_offset..head_offset + self.head.w.len()]
                .iter_mut()
                .zip(&self.head.w)
            {
                *slot += wd * w;
            }
        }
        loss
    }

    pub fn n_params(&self) -> usize {
        self.stack.n_params() + self.head.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.stack.write_params(&mut out);
        out.extend_from_slice(&self.head.w);
        out.extend_from_slice(&self.head.b);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut cursor = 0;
        self.stack.read_params(params, &mut cursor);
        let lw = self.head.w.len();
        self.head.w.copy_from_slice(&params[cursor..cursor + lw]);
        cursor += lw;
        let lb = self.head.b.len();
        self.head.b.copy_from_slice(&params[cursor..cursor + lb]);
    }

    /// Full-batch loss for the gradient check.
    pub fn batch_loss(&self, x: &[f64], d: usize, y: &[f64], wd: f64) -> f64 {
        self.loss_and_grad(x, d, y, wd, None)
    }

    /// Analytic full-batch gradient for the gradient check.
    pub fn batch_grad(&self, x: &[f64], d: usize, y: &[f64], wd: f64) -> Vec<f64> {
        let mut grads = vec![0.0; self.n_params()];
        self.loss_and_grad(x, d, y, wd, Some(&mut grads));
        grads
    }

    fn train(
        &mut self,
        x: &[f64],
        d: usize,
        y: &[f64],
        config: &MlpConfig,
    ) -> Result<Vec<f64>, MlpError> {
        let n = y.len();
        if n == 0 {
            return Err(MlpError::EmptyTrainingData);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(1));
        let mut velocity = vec![0.0; self.n_params()];
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_losses = Vec::with_capacity(config.epochs);
        let mut bx = Vec::new();
        let mut by = Vec::new();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut steps = 0;
            for (step, chunk) in order.chunks(config.batch_size).enumerate() {
                bx.clear();
                by.clear();
                for &i in chunk {
                    bx.extend_from_slice(&x[i * d..(i + 1) * d]);
                    by.push(y[i]);
                }
                let mut grads = vec![0.0; self.n_params()];
                let loss = self.loss_and_grad(&bx, d, &by, config.weight_decay, Some(&mut grads));
                if !loss.is_finite() {
                    return Err(MlpError::NonFiniteLoss { epoch, step, loss });
                }
                let mut params = self.params();
                for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grads) {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
                self.set_params(&params);
                epoch_loss += loss;
                steps += 1;
            }
            epoch_losses.push(epoch_loss / steps as f64);
        }
        Ok(epoch_losses)
    }

    /// Fits a regression network on (x, y); inputs and targets are
    /// standardized internally.
    pub fn fit_regression(x: &[f64], d: usize, y: &[f64], config: &MlpConfig) -> Result<Mlp, MlpError> {
        config.validate()?;
        let n = y.len();
        if n == 0 {
            return Err(MlpError::EmptyTrainingData);
        }
        let rows: Vec<&[f64]> = (0..n).map(|i| &x[i * d..(i + 1) * d]).collect();
        let norm = NormStats::from_rows(&rows, d);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let mut net = Mlp::new(d, config, false, 0.0, norm);
        net.y_mean = y_mean;
        net.y_std = y_var.sqrt().max(1e-8);
        net.train(x, d, y, config)?;
        Ok(net)
    }

    /// Fits a binary classifier; predictions are clipped probabilities.
    pub fn fit_classifier(
        x: &[f64],
        d: usize,
        labels: &[f64],
        config: &MlpConfig,
        clip: f64,
    ) -> Result<Mlp, MlpError> {
        config.validate()?;
        let n = labels.len();
        if n == 0 {
            return Err(MlpError::EmptyTrainingData);
        }
        let rows: Vec<&[f64]> = (0..n).map(|i| &x[i * d..(i + 1) * d]).collect();
        let norm = NormStats::from_rows(&rows, d);
        let mut net = Mlp::new(d, config, true, clip, norm);
        net.train(x, d, labels, config)?;
        Ok(net)
    }

    /// Epoch-mean training losses for a fresh fit; exposed for convergence
    /// diagnostics and tests.
    pub fn fit_regression_with_trace(
        x: &[f64],
        d: usize,
        y: &[f64],
        config: &MlpConfig,
    ) -> Result<(Mlp, Vec<f64>), MlpError> {
        config.validate()?;
        let n = y.len();
        if n == 0 {
            return Err(MlpError::EmptyTrainingData);
        }
        let rows: Vec<&[f64]> = (0..n).map(|i| &x[i * d..(i + 1) * d]).collect();
        let norm = NormStats::from_rows(&rows, d);
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let mut net = Mlp::new(d, config, false, 0.0, norm);
        net.y_mean = y_mean;
        net.y_std = y_var.sqrt().max(1e-8);
        let trace = net.train(x, d, y, config)?;
        Ok((net, trace))
    }
}

// ---------------------------------------------------------------------------
// Shared-representation nuisance network
// ---------------------------------------------------------------------------

/// Head outputs of the shared nuisance network for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadOutputs {
    pub mu_s_e: [f64; 2],
    pub mu_s_o: [f64; 2],
    pub mu_y_o: [f64; 2],
    pub pi_e: f64,
    pub pi_o: f64,
    /// Probability of G = E.
    pub pi_g: f64,
}

/// Loss weights per head, in the order
/// [mu_s_e0, mu_s_e1, mu_s_o0, mu_s_o1, mu_y_o0, mu_y_o1, pi_e, pi_o, pi_g].
pub type HeadWeights = [f64; 9];

/// Per-head target standardization for the six outcome heads, in the order
/// [mu_s_e0, mu_s_e1, mu_s_o0, mu_s_o1, mu_y_o0, mu_y_o1].
#[derive(Debug, Clone)]
pub struct HeadNorm {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl HeadNorm {
    pub fn identity() -> Self {
        HeadNorm { mean: [0.0; 6], std: [1.0; 6] }
    }
}

/// Shared-representation network predicting all six nuisance functions.
///
/// Layout: trunk x -> h_G (group head pi_g off the trunk); experimental
/// branch h_G -> h_E with heads mu_s_e(0), mu_s_e(1), pi_e; observational
/// branch h_G -> h_O with head pi_o and a further shared short/long
/// representation h_O -> h_SY with heads mu_s_o(a), mu_y_o(a).
#[derive(Debug, Clone)]
pub struct SharedNuisanceNet {
    trunk: Stack,
    exp_rep: Stack,
    obs_rep: Stack,
    sy_rep: Stack,
    pi_g: Layer,
    pi_e: Layer,
    pi_o: Layer,
    mu_s_e: [Layer; 2],
    mu_s_o: [Layer; 2],
    mu_y_o: [Layer; 2],
    input_dim: usize,
    clip: f64,
    norm: NormStats,
    head_norm: HeadNorm,
}

/// Offsets of the parameter blocks in the flat layout; see `params`.
struct ParamLayout {
    trunk: usize,
    exp_rep: usize,
    obs_rep: usize,
    sy_rep: usize,
    pi_g: usize,
    pi_e: usize,
    pi_o: usize,
    mu_s_e: [usize; 2],
    mu_s_o: [usize; 2],
    mu_y_o: [usize; 2],
    total: usize,
}

impl SharedNuisanceNet {
    pub fn new(
        d: usize,
        config: &MlpConfig,
        clip: f64,
        norm: NormStats,
        head_norm: HeadNorm,
    ) -> Result<Self, MlpError> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let branch_width = *config.widths.last().unwrap_or(&16);
        let trunk = Stack::new(d, &config.widths, config.activation, &mut rng);
        let rep = trunk.out_dim(d);
        let exp_rep = Stack::new(rep, &[branch_width], config.activation, &mut rng);
        let obs_rep = Stack::new(rep, &[branch_width], config.activation, &mut rng);
        let sy_rep = Stack::new(branch_width, &[branch_width], config.activation, &mut rng);
        let pi_g = Layer::init(rep, 1, &mut rng);
        let pi_e = Layer::init(branch_width, 1, &mut rng);
        let pi_o = Layer::init(branch_width, 1, &mut rng);
        let mu_s_e = [Layer::init(branch_width, 1, &mut rng), Layer::init(branch_width, 1, &mut rng)];
        let mu_s_o = [Layer::init(branch_width, 1, &mut rng), Layer::init(branch_width, 1, &mut rng)];
        let mu_y_o = [Layer::init(branch_width, 1, &mut rng), Layer::init(branch_width, 1, &mut rng)];
        Ok(SharedNuisanceNet {
            trunk,
            exp_rep,
            obs_rep,
            sy_rep,
            pi_g,
            pi_e,
            pi_o,
            mu_s_e,
            mu_s_o,
            mu_y_o,
            input_dim: d,
            clip,
            norm,
            head_norm,
        })
    }

    fn layout(&self) -> ParamLayout {
        let mut cursor = 0;
        let trunk = cursor;
        cursor += self.trunk.n_params();
        let exp_rep = cursor;
        cursor += self.exp_rep.n_params();
        let obs_rep = cursor;
        cursor += self.obs_rep.n_params();
        let sy_rep = cursor;
        cursor += self.sy_rep.n_params();
        let pi_g = cursor;
        cursor += self.pi_g.n_params();
        let pi_e = cursor;
        cursor += self.pi_e.n_params();
        let pi_o = cursor;
        cursor += self.pi_o.n_params();
        let mut mu_s_e = [0; 2];
        for (slot, layer) in mu_s_e.iter_mut().zip(&self.mu_s_e) {
            *slot = cursor;
            cursor += layer.n_params();
        }
        let mut mu_s_o = [0; 2];
        for (slot, layer) in mu_s_o.iter_mut().zip(&self.mu_s_o) {
            *slot = cursor;
            cursor += layer.n_params();
        }
        let mut mu_y_o = [0; 2];
        for (slot, layer) in mu_y_o.iter_mut().zip(&self.mu_y_o) {
            *slot = cursor;
            cursor += layer.n_params();
        }
        ParamLayout {
            trunk,
            exp_rep,
            obs_rep,
            sy_rep,
            pi_g,
            pi_e,
            pi_o,
            mu_s_e,
            mu_s_o,
            mu_y_o,
            total: cursor,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().total
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.trunk.write_params(&mut out);
        self.exp_rep.write_params(&mut out);
        self.obs_rep.write_params(&mut out);
        self.sy_rep.write_params(&mut out);
        for layer in [&self.pi_g, &self.pi_e, &self.pi_o]
            .into_iter()
            .chain(&self.mu_s_e)
            .chain(&self.mu_s_o)
            .chain(&self.mu_y_o)
        {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut cursor = 0;
        self.trunk.read_params(params, &mut cursor);
        self.exp_rep.read_params(params, &mut cursor);
        self.obs_rep.read_params(params, &mut cursor);
        self.sy_rep.read_params(params, &mut cursor);
        for layer in [&mut self.pi_g, &mut self.pi_e, &mut self.pi_o]
            .into_iter()
            .chain(self.mu_s_e.iter_mut())
            .chain(self.mu_s_o.iter_mut())
            .chain(self.mu_y_o.iter_mut())
        {
            let lw = layer.w.len();
            layer.w.copy_from_slice(&params[cursor..cursor + lw]);
            cursor += lw;
            let lb = layer.b.len();
            layer.b.copy_from_slice(&params[cursor..cursor + lb]);
            cursor += lb;
        }
    }

    /// Deterministic forward pass of all heads (dropout off).
    pub fn forward(&self, x: &[f64]) -> Result<HeadOutputs, MlpError> {
        if x.len() != self.input_dim {
            return Err(MlpError::DimensionMismatch { got: x.len(), want: self.input_dim });
        }
        let mut xs = Vec::new();
        self.norm.apply(x, &mut xs);
        let mut trunk_cache = StackCache::default();
        self.trunk.forward(&xs, 0.0, None, &mut trunk_cache);
        let h_g: Vec<f64> = trunk_cache.act.last().cloned().unwrap_or_else(|| xs.clone());
        let mut one = Vec::with_capacity(1);

        let mut exp_cache = StackCache::default();
        self.exp_rep.forward(&h_g, 0.0, None, &mut exp_cache);
        let h_e = exp_cache.act.last().unwrap();
        let mut obs_cache = StackCache::default();
        self.obs_rep.forward(&h_g, 0.0, None, &mut obs_cache);
        let h_o = obs_cache.act.last().unwrap().clone();
        let mut sy_cache = StackCache::default();
        self.sy_rep.forward(&h_o, 0.0, None, &mut sy_cache);
        let h_sy = sy_cache.act.last().unwrap();

        let mut head = |layer: &Layer, input: &[f64]| {
            layer.forward(input, &mut one);
            one[0]
        };
        let hn = &self.head_norm;
        let out = HeadOutputs {
            mu_s_e: [
                hn.mean[0] + hn.std[0] * head(&self.mu_s_e[0], h_e),
                hn.mean[1] + hn.std[1] * head(&self.mu_s_e[1], h_e),
            ],
            mu_s_o: [
                hn.mean[2] + hn.std[2] * head(&self.mu_s_o[0], h_sy),
                hn.mean[3] + hn.std[3] * head(&self.mu_s_o[1], h_sy),
            ],
            mu_y_o: [
                hn.mean[4] + hn.std[4] * head(&self.mu_y_o[0], h_sy),
                hn.mean[5] + hn.std[5] * head(&self.mu_y_o[1], h_sy),
            ],
            pi_e: crate::regress::clamp_prob(sigmoid(head(&self.pi_e, h_e)), self.clip),
            pi_o: crate::regress::clamp_prob(sigmoid(head(&self.pi_o, &h_o)), self.clip),
            pi_g: crate::regress::clamp_prob(sigmoid(head(&self.pi_g, &h_g)), self.clip),
        };
        Ok(out)
    }

    /// Masked multi-task loss over a batch, optionally accumulating the
    /// analytic gradient. Dropout masks are drawn from `rng` when training.
    fn loss_and_grad(
        &self,
        batch: &[&Row],
        weights: &HeadWeights,
        wd: f64,
        dropout: f64,
        mut rng: Option<&mut ChaCha12Rng>,
        mut grads: Option<&mut [f64]>,
    ) -> f64 {
        let layout = self.layout();
        // Supervised row counts per head for masked averaging.
        let mut counts = [0usize; 9];
        for row in batch {
            match row.g {
                Group::E => {
                    counts[usize::from(row.a)] += 1; // mu_s_e heads at 0, 1
                    counts[6] += 1;
                }
                Group::O => {
                    counts[2 + usize::from(row.a)] += 1;
                    counts[4 + usize::from(row.a)] += 1;
                    counts[7] += 1;
                }
            }
            counts[8] += 1;
        }
        let inv = |k: usize| if counts[k] == 0 { 0.0 } else { 1.0 / counts[k] as f64 };

        let mut loss = 0.0;
        let mut xs = Vec::new();
        let mut one = Vec::with_capacity(1);
        for row in batch {
            self.norm.apply(&row.x, &mut xs);
            let mut trunk_cache = StackCache::default();
            self.trunk
                .forward(&xs, dropout, rng.as_deref_mut(), &mut trunk_cache);
            let h_g: Vec<f64> = trunk_cache.act.last().cloned().unwrap_or_else(|| xs.clone());
            let mut grad_hg = vec![0.0; h_g.len()];

            // group head, supervised on every row
            {
                self.pi_g.forward(&h_g, &mut one);
                let z = one[0];
                let target = f64::from(row.g == Group::E);
                loss += weights[8] * inv(8) * bce_loss(z, target);
                if let Some(g) = grads.as_deref_mut() {
                    let dz = weights[8] * inv(8) * (sigmoid(z) - target);
                    for j in 0..h_g.len() {
                        g[layout.pi_g + j] += dz * h_g[j];
                        grad_hg[j] += dz * self.pi_g.w[j];
                    }
                    g[layout.pi_g + self.pi_g.w.len()] += dz;
                }
            }

            match row.g {
                Group::E => {
                    let mut exp_cache = StackCache::default();
                    self.exp_rep.forward(&h_g, 0.0, None, &mut exp_cache);
                    let h_e = exp_cache.act.last().unwrap().clone();
                    let mut grad_he = vec![0.0; h_e.len()];
                    let arm = usize::from(row.a);

                    // short-term outcome head of the realized arm
                    {
                        let head = &self.mu_s_e[arm];
                        head.forward(&h_e, &mut one);
                        let t = (row.s - self.head_norm.mean[arm]) / self.head_norm.std[arm];
                        let diff = one[0] - t;
                        loss += weights[arm] * inv(arm) * diff * diff;
                        if let Some(g) = grads.as_deref_mut() {
                            let dz = weights[arm] * inv(arm) * 2.0 * diff;
                            let base = layout.mu_s_e[arm];
                            for j in 0..h_e.len() {
                                g[base + j] += dz * h_e[j];
                                grad_he[j] += dz * head.w[j];
                            }
                            g[base + head.w.len()] += dz;
                        }
                    }
                    // experimental propensity head
                    {
                        self.pi_e.forward(&h_e, &mut one);
                        let z = one[0];
                        let target = f64::from(row.a);
                        loss += weights[6] * inv(6) * bce_loss(z, target);
                        if let Some(g) = grads.as_deref_mut() {
                            let dz = weights[6] * inv(6) * (sigmoid(z) - target);
                            for j in 0..h_e.len() {
                                g[layout.pi_e + j] += dz * h_e[j];
                                grad_he[j] += dz * self.pi_e.w[j];
                            }
                            g[layout.pi_e + self.pi_e.w.len()] += dz;
                        }
                    }
                    if let Some(g) = grads.as_deref_mut() {
                        let back =
                            self.exp_rep
                                .backward(&h_g, &exp_cache, &grad_he, g, layout.exp_rep);
                        for (a, b) in grad_hg.iter_mut().zip(&back) {
                            *a += b;
                        }
                    }
                }
                Group::O => {
                    let mut obs_cache = StackCache::default();
                    self.obs_rep.forward(&h_g, 0.0, None, &mut obs_cache);
                    let h_o = obs_cache.act.last().unwrap().clone();
                    let mut grad_ho = vec![0.0; h_o.len()];
                    let mut sy_cache = StackCache::default();
                    self.sy_rep.forward(&h_o, 0.0, None, &mut sy_cache);
                    let h_sy = sy_cache.act.last().unwrap().clone();
                    let mut grad_hsy = vec![0.0; h_sy.len()];
                    let arm = usize::from(row.a);

                    // short-term outcome head
                    {
                        let head = &self.mu_s_o[arm];
                        head.forward(&h_sy, &mut one);
                        let k = 2 + arm;
                        let t = (row.s - self.head_norm.mean[k]) / self.head_norm.std[k];
                        let diff = one[0] - t;
                        loss += weights[k] * inv(k) * diff * diff;
                        if let Some(g) = grads.as_deref_mut() {
                            let dz = weights[k] * inv(k) * 2.0 * diff;
                            let base = layout.mu_s_o[arm];
                            for j in 0..h_sy.len() {
                                g[base + j] += dz * h_sy[j];
                                grad_hsy[j] += dz * head.w[j];
                            }
                            g[base + head.w.len()] += dz;
                        }
                    }
                    // long-term outcome head
                    {
                        let head = &self.mu_y_o[arm];
                        head.forward(&h_sy, &mut one);
                        let k = 4 + arm;
                        let y = row.y.expect("observational row carries y");
                        let t = (y - self.head_norm.mean[k]) / self.head_norm.std[k];
                        let diff = one[0] - t;
                        loss += weights[k] * inv(k) * diff * diff;
                        if let Some(g) = grads.as_deref_mut() {
                            let dz = weights[k] * inv(k) * 2.0 * diff;
                            let base = layout.mu_y_o[arm];
                            for j in 0..h_sy.len() {
                                g[base + j] += dz * h_sy[j];
                                grad_hsy[j] += dz * head.w[j];
                            }
                            g[base + head.w.len()] += dz;
                        }
                    }
                    // observational propensity head
                    {
                        self.pi_o.forward(&h_o, &mut one);
                        let z = one[0];
                        let target = f64::from(row.a);
                        loss += weights[7] * inv(7) * bce_loss(z, target);
                        if let Some(g) = grads.as_deref_mut() {
                            let dz = weights[7] * inv(7) * (sigmoid(z) - target);
                            for j in 0..h_o.len() {
                                g[layout.pi_o + j] += dz * h_o[j];
                                grad_ho[j] += dz * self.pi_o.w[j];
                            }
                            g[layout.pi_o + self.pi_o.w.len()] += dz;
                        }
                    }
                    if let Some(g) = grads.as_deref_mut() {
                        let back_sy =
                            self.sy_rep
                                .backward(&h_o, &sy_cache, &grad_hsy, g, layout.sy_rep);
                        for (a, b) in grad_ho.iter_mut().zip(&back_sy) {
                            *a += b;
                        }
                        let back =
                            self.obs_rep
                                .backward(&h_g, &obs_cache, &grad_ho, g, layout.obs_rep);
                        for (a, b) in grad_hg.iter_mut().zip(&back) {
                            *a += b;
                        }
                    }
                }
            }

            if let Some(g) = grads.as_deref_mut() {
                self.trunk.backward(&xs, &trunk_cache, &grad_hg, g, layout.trunk);
            }
        }

        // weight decay on all weights
        let norm_sq = self.trunk.weight_norm_sq()
            + self.exp_rep.weight_norm_sq()
            + self.obs_rep.weight_norm_sq()
            + self.sy_rep.weight_norm_sq()
            + [&self.pi_g, &self.pi_e, &self.pi_o]
                .into_iter()
                .chain(&self.mu_s_e)
                .chain(&self.mu_s_o)
                .chain(&self.mu_y_o)
                .map(|l| l.w.iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>();
        loss += 0.5 * wd * norm_sq;
        if let Some(g) = grads.as_deref_mut() {
            self.trunk.add_decay(wd, g, layout.trunk);
            self.exp_rep.add_decay(wd, g, layout.exp_rep);
            self.obs_rep.add_decay(wd, g, layout.obs_rep);
            self.sy_rep.add_decay(wd, g, layout.sy_rep);
            for (layer, base) in [
                (&self.pi_g, layout.pi_g),
                (&self.pi_e, layout.pi_e),
                (&self.pi_o, layout.pi_o),
                (&self.mu_s_e[0], layout.mu_s_e[0]),
                (&self.mu_s_e[1], layout.mu_s_e[1]),
                (&self.mu_s_o[0], layout.mu_s_o[0]),
                (&self.mu_s_o[1], layout.mu_s_o[1]),
                (&self.mu_y_o[0], layout.mu_y_o[0]),
                (&self.mu_y_o[1], layout.mu_y_o[1]),
            ] {
                for (slot, w) in g[base..base + layer.w.len()].iter_mut().zip(&layer.w) {
                    *slot += wd * w;
                }
            }
        }
        loss
    }

    /// Full-batch masked loss (no dropout), for gradient checks and tests.
    pub fn batch_loss(&self, batch: &[&Row], weights: &HeadWeights, wd: f64) -> f64 {
        self.loss_and_grad(batch, weights, wd, 0.0, None, None)
    }

    /// Analytic gradient of [`Self::batch_loss`].
    pub fn batch_grad(&self, batch: &[&Row], weights: &HeadWeights, wd: f64) -> Vec<f64> {
        let mut grads = vec![0.0; self.n_params()];
        self.loss_and_grad(batch, weights, wd, 0.0, None, Some(&mut grads));
        grads
    }

    /// One SGD step on a minibatch; returns the masked loss before the step.
    pub fn backward_and_step(
        &mut self,
        batch: &[&Row],
        weights: &HeadWeights,
        config: &MlpConfig,
        velocity: &mut [f64],
        rng: &mut ChaCha12Rng,
    ) -> Result<f64, MlpError> {
        let mut grads = vec![0.0; self.n_params()];
        let loss = self.loss_and_grad(
            batch,
            weights,
            config.weight_decay,
            config.dropout,
            Some(rng),
            Some(&mut grads),
        );
        if !loss.is_finite() {
            return Err(MlpError::NonFiniteLoss { epoch: 0, step: 0, loss });
        }
        let mut params = self.params();
        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grads) {
            *v = config.momentum * *v - config.learning_rate * g;
            *p += *v;
        }
        self.set_params(&params);
        Ok(loss)
    }

    /// Trains the shared network on all rows of the dataset.
    pub fn fit(dataset: &PanelDataset, config: &MlpConfig) -> Result<SharedNuisanceNet, MlpError> {
        config.validate()?;
        let d = dataset.d();
        let rows = dataset.rows();
        let xs: Vec<&[f64]> = rows.iter().map(|r| r.x.as_slice()).collect();
        let norm = NormStats::from_rows(&xs, d);
        // Per-head target stats over the supervised rows.
        let mut head_norm = HeadNorm::identity();
        let mut sums = [(0.0f64, 0.0f64, 0usize); 6];
        let tally = |k: usize, v: f64, sums: &mut [(f64, f64, usize); 6]| {
            sums[k].0 += v;
            sums[k].1 += v * v;
            sums[k].2 += 1;
        };
        for row in rows {
            let arm = usize::from(row.a);
            match row.g {
                Group::E => tally(arm, row.s, &mut sums),
                Group::O => {
                    tally(2 + arm, row.s, &mut sums);
                    tally(4 + arm, row.y.expect("O row y"), &mut sums);
                }
            }
        }
        for k in 0..6 {
            let (s, s2, c) = sums[k];
            if c > 0 {
                let mean = s / c as f64;
                head_norm.mean[k] = mean;
                head_norm.std[k] = ((s2 / c as f64 - mean * mean).max(0.0)).sqrt().max(1e-8);
            }
        }
        let mut net = SharedNuisanceNet::new(d, config, crate::regress::DEFAULT_CLIP, norm, head_norm)?;
        let weights: HeadWeights = [1.0; 9];
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(1));
        let mut velocity = vec![0.0; net.n_params()];
        let mut order: Vec<usize> = (0..rows.len()).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            for (step, chunk) in order.chunks(config.batch_size).enumerate() {
                let batch: Vec<&Row> = chunk.iter().map(|&i| &rows[i]).collect();
                net.backward_and_step(&batch, &weights, config, &mut velocity, &mut rng)
                    .map_err(|e| match e {
                        MlpError::NonFiniteLoss { loss, .. } => {
                            MlpError::NonFiniteLoss { epoch, step, loss }
                        }
                        other => other,
                    })?;
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress;

    fn tiny_rows() -> Vec<Row> {
        vec![
            Row { g: Group::E, a: 0, x: vec![0.5, -1.0], s: 1.0, y: None },
            Row { g: Group::E, a: 1, x: vec![-0.2, 0.3], s: 2.0, y: None },
            Row { g: Group::O, a: 0, x: vec![1.5, 0.1], s: 0.5, y: Some(1.2) },
            Row { g: Group::O, a: 1, x: vec![-0.7, -0.4], s: -0.5, y: Some(0.3) },
        ]
    }

    /// Shifts every parameter (biases start at zero) so no ReLU
    /// pre-activation sits exactly at a kink, where one-sided finite
    /// differences are undefined.
    fn perturb_off_kinks(params: &mut Vec<f64>, apply: impl FnOnce(&[f64])) {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for v in params.iter_mut() {
            *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
        apply(params);
    }

    fn tiny_config() -> MlpConfig {
        MlpConfig {
            widths: vec![5],
            activation: Activation::Relu,
            learning_rate: 1e-2,
            momentum: 0.0,
            weight_decay: 1e-3,
            batch_size: 4,
            dropout: 0.0,
            epochs: 1,
            seed: 42,
        }
    }

    #[test]
    fn shared_net_gradient_matches_finite_differences() {
        let rows = tiny_rows();
        let refs: Vec<&Row> = rows.iter().collect();
        let mut net = SharedNuisanceNet::new(
            2,
            &tiny_config(),
            regress::DEFAULT_CLIP,
            NormStats::identity(2),
            HeadNorm::identity(),
        )
        .unwrap();
        perturb_off_kinks(&mut net.params(), |p| net.set_params(p));
        let weights: HeadWeights = [1.0, 0.5, 1.0, 2.0, 1.0, 1.0, 1.5, 1.0, 0.7];
        let analytic = net.batch_grad(&refs, &weights, 1e-3);
        let params = net.params();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = params.clone();
            p[i] += eps;
            plus.set_params(&p);
            p[i] -= 2.0 * eps;
            minus.set_params(&p);
            let numeric = (plus.batch_loss(&refs, &weights, 1e-3)
                - minus.batch_loss(&refs, &weights, 1e-3))
                / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn plain_mlp_gradient_matches_finite_differences() {
        let x = vec![0.1, -0.4, 0.9, 1.5, -1.1, 0.3];
        let y = vec![0.7, -0.3, 1.1];
        let mut net = Mlp::new(2, &tiny_config(), false, 0.0, NormStats::identity(2));
        perturb_off_kinks(&mut net.params(), |p| net.set_params(p));
        let analytic = net.batch_grad(&x, 2, &y, 1e-3);
        let params = net.params();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = params.clone();
            p[i] += eps;
            plus.set_params(&p);
            p[i] -= 2.0 * eps;
            minus.set_params(&p);
            let numeric =
                (plus.batch_loss(&x, 2, &y, 1e-3) - minus.batch_loss(&x, 2, &y, 1e-3)) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn masked_heads_receive_no_gradient() {
        // A batch of experimental rows must leave every observational-branch
        // parameter untouched.
        let rows: Vec<Row> = tiny_rows().into_iter().filter(|r| r.g == Group::E).collect();
        let refs: Vec<&Row> = rows.iter().collect();
        let net = SharedNuisanceNet::new(
            2,
            &tiny_config(),
            regress::DEFAULT_CLIP,
            NormStats::identity(2),
            HeadNorm::identity(),
        )
        .unwrap();
        let grads = net.batch_grad(&refs, &[1.0; 9], 0.0);
        let layout = net.layout();
        let obs_span = layout.obs_rep..layout.sy_rep + net.sy_rep.n_params();
        assert!(grads[obs_span].iter().all(|g| *g == 0.0));
        for base in [layout.pi_o, layout.mu_s_o[0], layout.mu_s_o[1], layout.mu_y_o[0], layout.mu_y_o[1]] {
            let span = base..base + net.pi_o.n_params();
            assert!(grads[span].iter().all(|g| *g == 0.0));
        }
        // and the unsupervised arm head gets nothing from arm-0-only rows
        let arm0: Vec<&Row> = refs.iter().copied().filter(|r| r.a == 0).collect();
        let grads = net.batch_grad(&arm0, &[1.0; 9], 0.0);
        let span = layout.mu_s_e[1]..layout.mu_s_e[1] + net.mu_s_e[1].n_params();
        assert!(grads[span].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn forward_zero_weights_outputs_bias_and_half() {
        let mut net = SharedNuisanceNet::new(
            2,
            &MlpConfig { activation: Activation::Identity, ..tiny_config() },
            regress::DEFAULT_CLIP,
            NormStats::identity(2),
            HeadNorm::identity(),
        )
        .unwrap();
        let zeros = vec![0.0; net.n_params()];
        net.set_params(&zeros);
        let out = net.forward(&[0.3, -0.8]).unwrap();
        // regression heads output their (zero) bias, sigmoid heads 0.5
        assert_eq!(out.mu_s_e, [0.0, 0.0]);
        assert_eq!(out.mu_s_o, [0.0, 0.0]);
        assert_eq!(out.mu_y_o, [0.0, 0.0]);
        assert_eq!(out.pi_e, 0.5);
        assert_eq!(out.pi_o, 0.5);
        assert_eq!(out.pi_g, 0.5);
    }

    #[test]
    fn forward_is_consistent_over_batches() {
        let net = SharedNuisanceNet::new(
            2,
            &tiny_config(),
            regress::DEFAULT_CLIP,
            NormStats::identity(2),
            HeadNorm::identity(),
        )
        .unwrap();
        let inputs = [[0.2, 0.4], [1.0, -1.0], [0.0, 0.0]];
        let singles: Vec<HeadOutputs> = inputs.iter().map(|x| net.forward(x).unwrap()).collect();
        for (x, expected) in inputs.iter().zip(&singles) {
            assert_eq!(net.forward(x).unwrap(), *expected);
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = SharedNuisanceNet::new(
            2,
            &tiny_config(),
            regress::DEFAULT_CLIP,
            NormStats::identity(2),
            HeadNorm::identity(),
        )
        .unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(MlpError::DimensionMismatch { got: 1, want: 2 })
        ));
    }

    #[test]
    fn linear_layer_matches_least_squares() {
        // y = 2x + 1 with a bare affine network, full-batch gradient descent.
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let config = MlpConfig {
            widths: vec![],
            activation: Activation::Identity,
            learning_rate: 0.05,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: n,
            dropout: 0.0,
            epochs: 400,
            seed: 9,
        };
        let net = Mlp::fit_regression(&x, 1, &y, &config).unwrap();
        let ls = regress::fit_least_squares(&x, 1, &y, 0.0).unwrap();
        let slope = net.predict_scalar(&[1.0]) - net.predict_scalar(&[0.0]);
        let slope_ls = ls.predict(&[1.0]) - ls.predict(&[0.0]);
        assert!((slope - slope_ls).abs() < 1e-2, "slope {slope} vs {slope_ls}");
        assert!((net.predict_scalar(&[0.0]) - ls.predict(&[0.0])).abs() < 1e-2);
    }

    #[test]
    fn convex_training_loss_is_nonincreasing() {
        let n = 32;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 0.5).collect();
        let config = MlpConfig {
            widths: vec![],
            activation: Activation::Identity,
            learning_rate: 0.02,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size: n,
            dropout: 0.0,
            epochs: 50,
            seed: 4,
        };
        let (_, trace) = Mlp::fit_regression_with_trace(&x, 1, &y, &config).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "loss increased: {pair:?}");
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let rows = tiny_rows();
        let ds = PanelDataset::from_rows(rows).unwrap();
        let config = MlpConfig { epochs: 3, ..tiny_config() };
        let a = SharedNuisanceNet::fit(&ds, &config).unwrap();
        let b = SharedNuisanceNet::fit(&ds, &config).unwrap();
        assert_eq!(a.params(), b.params());
        let pa = a.forward(&[0.1, 0.2]).unwrap();
        let pb = b.forward(&[0.1, 0.2]).unwrap();
        assert_eq!(pa, pb);
    }
}
