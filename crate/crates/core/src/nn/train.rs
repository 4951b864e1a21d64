//! Minibatch Adam training with validation-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checkpoint::{ModelCheckpoint, Provenance};
use super::network::{HeadKind, NetError, Network, NetworkConfig, Target};
use crate::color::LabColor;
use crate::dataset::preprocess::{NetInput, PreprocessConfig};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss diverged to {loss} at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamParams,
    /// Seeds minibatch shuffling.
    pub seed: u64,
}

impl TrainConfig {
    /// Backbone pretraining: lr 1e-3, batch 16, up to 50 epochs.
    pub fn pretraining() -> Self {
        Self { learning_rate: 1e-3, batch_size: 16, max_epochs: 50, patience: 5, adam: AdamParams::default(), seed: 0 }
    }

    /// Fitzpatrick fine-tuning: lr 1e-4, batch 32, up to 30 epochs.
    pub fn fitzpatrick() -> Self {
        Self { learning_rate: 1e-4, batch_size: 32, max_epochs: 30, patience: 5, adam: AdamParams::default(), seed: 0 }
    }

    /// CIELAB regression: lr 5e-4, batch 32, up to 50 epochs.
    pub fn lab_regression() -> Self {
        Self { learning_rate: 5e-4, batch_size: 32, max_epochs: 50, patience: 5, adam: AdamParams::default(), seed: 0 }
    }

    pub fn for_head(head: HeadKind) -> Self {
        match head {
            HeadKind::LabRegression => Self::lab_regression(),
            HeadKind::Ordinal | HeadKind::Classification => Self::fitzpatrick(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return err("batch_size and max_epochs must be positive");
        }
        if self.patience == 0 {
            return err("patience must be at least 1");
        }
        Ok(())
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, params: AdamParams) -> Self {
        Self { params, lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamParams { beta1, beta2, eps } = self.params;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..weights.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            weights[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub input: NetInput,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean loss over a set of examples.
pub fn mean_loss(net: &Network, examples: &[Example]) -> Result<f64, NetError> {
    let mut total = 0.0;
    for ex in examples {
        total += net.loss(&ex.input, &ex.target)?;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Data-dependent output-bias initialization: Lab head starts at the mean
/// target color, the CORAL head at the empirical log-odds of `P(y > k)`, the
/// softmax head at log class priors.
pub fn init_head_biases(net: &mut Network, train: &[Example]) {
    let config = net.config().clone();
    let n = train.len().max(1) as f64;
    let clip = |p: f64| p.clamp(1e-3, 1.0 - 1e-3);
    match config.head {
        HeadKind::LabRegression => {
            let labs: Vec<LabColor> = train
                .iter()
                .filter_map(|e| match e.target {
                    Target::Lab(l) => Some(l),
                    Target::Rank(_) => None,
                })
                .collect();
            if let Some(mean) = LabColor::mean(&labs) {
                net.head_biases_mut().copy_from_slice(&mean.to_array());
            }
        }
        HeadKind::Ordinal | HeadKind::Classification => {
            let mut counts = vec![0.0; config.classes];
            for e in train {
                if let Target::Rank(r) = e.target {
                    if (1..=config.classes).contains(&r) {
                        counts[r - 1] += 1.0;
                    }
                }
            }
            let biases = net.head_biases_mut();
            if config.head == HeadKind::Ordinal {
                for (k, b) in biases.iter_mut().enumerate() {
                    let above: f64 = counts[k + 1..].iter().sum();
                    let p = clip(above / n);
                    *b = (p / (1.0 - p)).ln();
                }
            } else {
                for (b, c) in biases.iter_mut().zip(&counts) {
                    *b = clip(c / n).ln();
                }
            }
            net.project();
        }
    }
}

/// Trains `config` on `train`, early-stopping on `val`, and returns the
/// best-validation weights as a checkpoint (stored at f32 precision).
pub fn train(
    config: &NetworkConfig,
    preprocess: &PreprocessConfig,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyValidation);
    }
    let mut net = Network::new(config.clone())?;
    init_head_biases(&mut net, train);

    let mut adam = Adam::new(net.param_count(), cfg.learning_rate, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = vec![0.0; net.param_count()];
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = net.params().to_vec();
    let mut history = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &train[i];
                batch_loss += net.accumulate_gradient(&ex.input, &ex.target, scale, &mut grad)?;
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch, batch: batch_idx, loss: batch_loss });
            }
            epoch_loss += batch_loss;
            adam.step(net.params_mut(), &grad);
            net.project();
        }
        let val_loss = mean_loss(&net, val)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, batch: usize::MAX, loss: val_loss });
        }
        history.push(EpochRecord { epoch, train_loss: epoch_loss / train.len() as f64, val_loss });
        log::debug!("epoch {epoch}: train {:.4} val {val_loss:.4}", epoch_loss / train.len() as f64);
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best_params.copy_from_slice(net.params()),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    let best = Network::from_params(config.clone(), best_params)?;
    let provenance = Provenance {
        seed: config.seed,
        shuffle_seed: cfg.seed,
        epochs_run: history.len(),
        best_epoch: stopper.best_epoch(),
        final_val_loss: stopper.best_loss(),
        train_examples: train.len(),
        val_examples: val.len(),
    };
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint::from_network(&best, preprocess.clone(), provenance),
        history,
        best_epoch: stopper.best_epoch(),
        stopped_early,
    })
}
