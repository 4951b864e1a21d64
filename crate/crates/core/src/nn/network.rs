//! A small convolutional network with hand-written backpropagation.
//!
//! Layout: `blocks × (conv 'same' → ReLU → max-pool) → flatten → dense(F) →
//! ReLU → head`. All parameters live in one flat `f64` vector so that the
//! optimizer, gradient checker and checkpoint writer can treat them uniformly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::LabColor;
use crate::dataset::preprocess::NetInput;
use crate::ordinal::{coral_loss, project_biases, softmax_loss, LossGrad, OrdinalError};

/// Below this squared distance the ΔE loss switches to squared ΔE, whose
/// gradient is defined at zero.
pub const DELTA_E_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input is {got_size}x{got_size}x{got_channels}, network expects {want}x{want}x3")]
    InputShape { got_size: usize, got_channels: usize, want: usize },
    #[error("parameter vector has {got} values, network needs {want}")]
    ParamCount { got: usize, want: usize },
    #[error("target does not match the {0:?} head")]
    TargetMismatch(HeadKind),
    #[error(transparent)]
    Ordinal(#[from] OrdinalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// CORAL: shared weight vector plus `classes − 1` ordered biases.
    Ordinal,
    /// Softmax over `classes` logits.
    Classification,
    /// CIELAB regression (L*, a*, b*).
    LabRegression,
}

impl HeadKind {
    pub fn predicts_rank(self) -> bool {
        !matches!(self, HeadKind::LabRegression)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Square input edge in pixels.
    pub input_size: usize,
    pub blocks: Vec<ConvBlock>,
    pub feature_dim: usize,
    pub head: HeadKind,
    /// Class count for rank heads; ignored by the Lab head.
    pub classes: usize,
    pub seed: u64,
}

impl NetworkConfig {
    /// 64×64 input, three 3×3 conv blocks (8, 16, 32 channels) with 2×2
    /// pooling and a 64-wide feature layer.
    pub fn desk_scale(head: HeadKind) -> Self {
        Self {
            input_size: 64,
            blocks: vec![
                ConvBlock { channels: 8, kernel: 3, pool: 2 },
                ConvBlock { channels: 16, kernel: 3, pool: 2 },
                ConvBlock { channels: 32, kernel: 3, pool: 2 },
            ],
            feature_dim: 64,
            head,
            classes: crate::ordinal::FITZPATRICK_CLASSES,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if self.input_size == 0 || self.feature_dim == 0 {
            return bad("input_size and feature_dim must be positive");
        }
        if self.head.predicts_rank() && self.classes < 2 {
            return bad("rank heads need at least 2 classes");
        }
        let mut size = self.input_size;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.channels == 0 || b.kernel == 0 || b.pool == 0 {
                return Err(NetError::Config(format!("block {i} has a zero dimension")));
            }
            if b.kernel % 2 == 0 {
                return Err(NetError::Config(format!("block {i} kernel must be odd for same padding")));
            }
            size /= b.pool;
            if size == 0 {
                return Err(NetError::Config(format!("block {i} pools the feature map to nothing")));
            }
        }
        Ok(())
    }

    /// Same architecture, ignoring the initialization seed.
    pub fn same_architecture(&self, other: &NetworkConfig) -> bool {
        NetworkConfig { seed: 0, ..self.clone() } == NetworkConfig { seed: 0, ..other.clone() }
    }

    pub fn output_len(&self) -> usize {
        match self.head {
            HeadKind::Ordinal => self.classes - 1,
            HeadKind::Classification => self.classes,
            HeadKind::LabRegression => 3,
        }
    }
}

/// Supervision for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// 1-based rank.
    Rank(usize),
    Lab(LabColor),
}

/// ΔE 1976 between predicted and target Lab, with gradient w.r.t. the prediction.
pub fn delta_e_loss(pred: &[f64], target: &LabColor) -> LossGrad {
    let diff = [pred[0] - target.l, pred[1] - target.a, pred[2] - target.b];
    let d2: f64 = diff.iter().map(|d| d * d).sum();
    if d2 > DELTA_E_EPS {
        let d = d2.sqrt();
        LossGrad { loss: d, grad: diff.iter().map(|x| x / d).collect() }
    } else {
        LossGrad { loss: d2, grad: diff.iter().map(|x| 2.0 * x).collect() }
    }
}

#[derive(Debug, Clone)]
struct ConvPlan {
    in_c: usize,
    out_c: usize,
    k: usize,
    pool: usize,
    /// Spatial size before pooling (equals the input size, 'same' padding).
    size: usize,
    pooled: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone)]
struct Plan {
    convs: Vec<ConvPlan>,
    flat: usize,
    dense_w: usize,
    dense_b: usize,
    head_w: usize,
    head_b: usize,
    n_params: usize,
}

/// Named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl Plan {
    fn build(cfg: &NetworkConfig) -> Self {
        let mut off = 0;
        let mut size = cfg.input_size;
        let mut in_c = 3;
        let mut convs = Vec::with_capacity(cfg.blocks.len());
        for b in &cfg.blocks {
            let w_off = off;
            off += b.channels * in_c * b.kernel * b.kernel;
            let b_off = off;
            off += b.channels;
            convs.push(ConvPlan {
                in_c,
                out_c: b.channels,
                k: b.kernel,
                pool: b.pool,
                size,
                pooled: size / b.pool,
                w_off,
                b_off,
            });
            size /= b.pool;
            in_c = b.channels;
        }
        let flat = in_c * size * size;
        let f = cfg.feature_dim;
        let dense_w = off;
        off += f * flat;
        let dense_b = off;
        off += f;
        let (hw, hb) = match cfg.head {
            HeadKind::Ordinal => (f, cfg.classes - 1),
            HeadKind::Classification => (cfg.classes * f, cfg.classes),
            HeadKind::LabRegression => (3 * f, 3),
        };
        let head_w = off;
        off += hw;
        let head_b = off;
        off += hb;
        Plan { convs, flat, dense_w, dense_b, head_w, head_b, n_params: off }
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Default, Clone)]
struct Cache {
    /// Input to each conv block (block 0 gets the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation conv outputs.
    pre: Vec<Vec<f64>>,
    /// Flat index into the post-ReLU map chosen by each pooling window.
    argmax: Vec<Vec<usize>>,
    flat: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    params: Vec<f64>,
}

impl Network {
    /// He-normal initialization from `config.seed`; all biases start at zero.
    pub fn new(config: NetworkConfig) -> Result<Self, NetError> {
        config.validate()?;
        let plan = Plan::build(&config);
        let mut params = vec![0.0; plan.n_params];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in slice {
                *v = normal.sample(&mut rng);
            }
        };
        for c in &plan.convs {
            let n = c.out_c * c.in_c * c.k * c.k;
            fill(&mut params[c.w_off..c.w_off + n], c.in_c * c.k * c.k);
        }
        let f = config.feature_dim;
        fill(&mut params[plan.dense_w..plan.dense_b], plan.flat);
        fill(&mut params[plan.head_w..plan.head_b], f);
        Ok(Self { config, params })
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self, NetError> {
        config.validate()?;
        let n = Plan::build(&config).n_params;
        Ok(Self { config, params: vec![0.0; n] })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<f64>) -> Result<Self, NetError> {
        config.validate()?;
        let want = Plan::build(&config).n_params;
        if params.len() != want {
            return Err(NetError::ParamCount { got: params.len(), want });
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn plan(&self) -> Plan {
        Plan::build(&self.config)
    }

    /// Named tensors in parameter order.
    pub fn tensor_specs(config: &NetworkConfig) -> Vec<TensorSpec> {
        let plan = Plan::build(config);
        let mut specs = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, offset: usize| {
            let len = shape.iter().product();
            specs.push(TensorSpec { name, shape, offset, len });
        };
        for (i, c) in plan.convs.iter().enumerate() {
            push(format!("block{i}.conv.weight"), vec![c.out_c, c.in_c, c.k, c.k], c.w_off);
            push(format!("block{i}.conv.bias"), vec![c.out_c], c.b_off);
        }
        let f = config.feature_dim;
        push("dense.weight".into(), vec![f, plan.flat], plan.dense_w);
        push("dense.bias".into(), vec![f], plan.dense_b);
        let k = config.classes;
        let (name, w_shape, b_len) = match config.head {
            HeadKind::Ordinal => ("coral", vec![f], k - 1),
            HeadKind::Classification => ("classifier", vec![k, f], k),
            HeadKind::LabRegression => ("lab", vec![3, f], 3),
        };
        push(format!("{name}.weight"), w_shape, plan.head_w);
        push(format!("{name}.bias"), vec![b_len], plan.head_b);
        specs
    }

    /// Keeps CORAL biases in non-increasing order; no-op for other heads.
    pub fn project(&mut self) {
        if self.config.head == HeadKind::Ordinal {
            let plan = self.plan();
            project_biases(&mut self.params[plan.head_b..plan.head_b + self.config.classes - 1]);
        }
    }

    /// Mutable view of the output-layer biases.
    pub fn head_biases_mut(&mut self) -> &mut [f64] {
        let plan = self.plan();
        let n = self.config.output_len();
        &mut self.params[plan.head_b..plan.head_b + n]
    }

    fn check_input(&self, input: &NetInput) -> Result<(), NetError> {
        let want = self.config.input_size;
        if input.size() != want || input.channels() != 3 {
            return Err(NetError::InputShape {
                got_size: input.size(),
                got_channels: input.channels(),
                want,
            });
        }
        Ok(())
    }

    /// Raw head output: threshold logits, class logits or (L*, a*, b*).
    pub fn forward(&self, input: &NetInput) -> Result<Vec<f64>, NetError> {
        self.check_input(input)?;
        let mut cache = Cache::default();
        Ok(self.forward_cached(&self.plan(), input.data(), &mut cache))
    }

    fn forward_cached(&self, plan: &Plan, input: &[f64], cache: &mut Cache) -> Vec<f64> {
        let p = &self.params;
        cache.inputs.clear();
        cache.pre.clear();
        cache.argmax.clear();
        let mut x = input.to_vec();
        for c in &plan.convs {
            let z = conv_forward(c, &p[c.w_off..c.b_off], &p[c.b_off..c.b_off + c.out_c], &x);
            let (pooled, argmax) = relu_pool(c, &z);
            cache.inputs.push(std::mem::replace(&mut x, pooled));
            cache.pre.push(z);
            cache.argmax.push(argmax);
        }
        let f = self.config.feature_dim;
        let w = &p[plan.dense_w..plan.dense_b];
        let b = &p[plan.dense_b..plan.dense_b + f];
        let hidden_pre: Vec<f64> = (0..f)
            .map(|j| b[j] + dot(&w[j * plan.flat..(j + 1) * plan.flat], &x))
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let out = self.head_forward(plan, &hidden);
        cache.flat = x;
        cache.hidden_pre = hidden_pre;
        cache.hidden = hidden;
        out
    }

    fn head_forward(&self, plan: &Plan, h: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let f = self.config.feature_dim;
        match self.config.head {
            HeadKind::Ordinal => {
                let s = dot(&p[plan.head_w..plan.head_w + f], h);
                p[plan.head_b..plan.head_b + self.config.classes - 1]
                    .iter()
                    .map(|b| s + b)
                    .collect()
            }
            HeadKind::Classification | HeadKind::LabRegression => {
                let n = self.config.output_len();
                (0..n)
                    .map(|j| p[plan.head_b + j] + dot(&p[plan.head_w + j * f..plan.head_w + (j + 1) * f], h))
                    .collect()
            }
        }
    }

    /// Loss for one example with the matching head loss.
    pub fn loss_of_output(&self, out: &[f64], target: &Target) -> Result<LossGrad, NetError> {
        match (self.config.head, target) {
            (HeadKind::Ordinal, Target::Rank(r)) => Ok(coral_loss(out, *r)?),
            (HeadKind::Classification, Target::Rank(r)) => Ok(softmax_loss(out, *r)?),
            (HeadKind::LabRegression, Target::Lab(lab)) => Ok(delta_e_loss(out, lab)),
            (head, _) => Err(NetError::TargetMismatch(head)),
        }
    }

    pub fn loss(&self, input: &NetInput, target: &Target) -> Result<f64, NetError> {
        let out = self.forward(input)?;
        Ok(self.loss_of_output(&out, target)?.loss)
    }

    /// Adds `scale · ∂loss/∂params` into `grad` and returns the loss.
    pub fn accumulate_gradient(
        &self,
        input: &NetInput,
        target: &Target,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, NetError> {
        self.check_input(input)?;
        if grad.len() != self.params.len() {
            return Err(NetError::ParamCount { got: grad.len(), want: self.params.len() });
        }
        let plan = self.plan();
        let mut cache = Cache::default();
        let out = self.forward_cached(&plan, input.data(), &mut cache);
        let lg = self.loss_of_output(&out, target)?;
        let d_out: Vec<f64> = lg.grad.iter().map(|g| g * scale).collect();
        self.backward(&plan, &cache, &d_out, grad);
        Ok(lg.loss)
    }

    fn backward(&self, plan: &Plan, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let f = self.config.feature_dim;
        let h = &cache.hidden;
        let mut d_hidden = vec![0.0; f];
        match self.config.head {
            HeadKind::Ordinal => {
                let ds: f64 = d_out.iter().sum();
                for j in 0..f {
                    grad[plan.head_w + j] += ds * h[j];
                    d_hidden[j] = ds * p[plan.head_w + j];
                }
                for (k, d) in d_out.iter().enumerate() {
                    grad[plan.head_b + k] += d;
                }
            }
            HeadKind::Classification | HeadKind::LabRegression => {
                for (o, &d) in d_out.iter().enumerate() {
                    grad[plan.head_b + o] += d;
                    let row = plan.head_w + o * f;
                    for j in 0..f {
                        grad[row + j] += d * h[j];
                        d_hidden[j] += d * p[row + j];
                    }
                }
            }
        }
        let mut d_flat = vec![0.0; plan.flat];
        for j in 0..f {
            if cache.hidden_pre[j] <= 0.0 {
                continue;
            }
            let d = d_hidden[j];
            grad[plan.dense_b + j] += d;
            let row = plan.dense_w + j * plan.flat;
            axpy(d, &cache.flat, &mut grad[row..row + plan.flat]);
            axpy(d, &p[row..row + plan.flat], &mut d_flat);
        }
        let mut d_next = d_flat;
        for (i, c) in plan.convs.iter().enumerate().rev() {
            let hw = c.size * c.size;
            let mut d_pre = vec![0.0; c.out_c * hw];
            for (pi, &src) in cache.argmax[i].iter().enumerate() {
                d_pre[src] += d_next[pi];
            }
            for (d, &z) in d_pre.iter_mut().zip(&cache.pre[i]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
            let need_input_grad = i > 0;
            d_next = conv_backward(c, p, &cache.inputs[i], &d_pre, grad, need_input_grad);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Valid output range `[lo, hi)` along one axis for kernel offset `d`.
fn valid_range(size: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (size as isize - d.max(0)).max(0) as usize;
    (lo.min(hi), hi)
}

fn conv_forward(c: &ConvPlan, w: &[f64], b: &[f64], input: &[f64]) -> Vec<f64> {
    let n = c.size;
    let hw = n * n;
    let pad = (c.k / 2) as isize;
    let mut z = vec![0.0; c.out_c * hw];
    for o in 0..c.out_c {
        let zo = &mut z[o * hw..(o + 1) * hw];
        zo.fill(b[o]);
        for i in 0..c.in_c {
            let xi = &input[i * hw..(i + 1) * hw];
            for ky in 0..c.k {
                let dy = ky as isize - pad;
                let (ylo, yhi) = valid_range(n, dy);
                for kx in 0..c.k {
                    let dx = kx as isize - pad;
                    let (xlo, xhi) = valid_range(n, dx);
                    let wv = w[((o * c.in_c + i) * c.k + ky) * c.k + kx];
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let zrow = &mut zo[y * n + xlo..y * n + xhi];
                        let sx0 = (xlo as isize + dx) as usize;
                        let xrow = &xi[sy * n + sx0..sy * n + sx0 + (xhi - xlo)];
                        axpy(wv, xrow, zrow);
                    }
                }
            }
        }
    }
    z
}

/// ReLU followed by max-pooling; returns the pooled map and, for each pooled
/// cell, the flat index of the winning pre-pool element.
fn relu_pool(c: &ConvPlan, z: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let n = c.size;
    let m = c.pooled;
    let hw = n * n;
    let mut out = Vec::with_capacity(c.out_c * m * m);
    let mut arg = Vec::with_capacity(c.out_c * m * m);
    for o in 0..c.out_c {
        for py in 0..m {
            for px in 0..m {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..c.pool {
                    for dx in 0..c.pool {
                        let idx = o * hw + (py * c.pool + dy) * n + px * c.pool + dx;
                        let v = z[idx].max(0.0);
                        if v > best {
                            best = v;
                            best_i = idx;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

fn conv_backward(
    c: &ConvPlan,
    p: &[f64],
    input: &[f64],
    d_pre: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let n = c.size;
    let hw = n * n;
    let pad = (c.k / 2) as isize;
    let mut d_in = if need_input_grad { vec![0.0; c.in_c * hw] } else { Vec::new() };
    for o in 0..c.out_c {
        let dz = &d_pre[o * hw..(o + 1) * hw];
        grad[c.b_off + o] += dz.iter().sum::<f64>();
        for i in 0..c.in_c {
            let xi = &input[i * hw..(i + 1) * hw];
            for ky in 0..c.k {
                let dy = ky as isize - pad;
                let (ylo, yhi) = valid_range(n, dy);
                for kx in 0..c.k {
                    let dx = kx as isize - pad;
                    let (xlo, xhi) = valid_range(n, dx);
                    let wi = c.w_off + ((o * c.in_c + i) * c.k + ky) * c.k + kx;
                    let wv = p[wi];
                    let sx0 = (xlo as isize + dx) as usize;
                    let len = xhi - xlo;
                    let mut acc = 0.0;
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let drow = &dz[y * n + xlo..y * n + xhi];
                        acc += dot(drow, &xi[sy * n + sx0..sy * n + sx0 + len]);
                        if need_input_grad {
                            let base = i * hw + sy * n + sx0;
                            axpy(wv, drow, &mut d_in[base..base + len]);
                        }
                    }
                    grad[wi] += acc;
                }
            }
        }
    }
    d_in
}
