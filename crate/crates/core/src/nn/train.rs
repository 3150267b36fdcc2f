//! Mini-batch training loop with SGD/Adam and the optional scale-ratio
//! penalty used by the mitigation experiments.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::prng::{derive_seed, Rng};

use super::backward::backward;
use super::forward::forward;
use super::{Mode, Network};

/// First-order optimizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    /// Adam with the standard defaults (0.9, 0.999, 1e-8).
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Everything a training run needs besides the model and data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// `Some(alpha)` blends the cross-entropy objective with a penalty on
    /// each normalization layer's mean scale ratio:
    /// `alpha * CE + (1 - alpha) * sum_layers log((mean gamma / mean sigma)^2)`.
    /// `alpha = 1` reproduces plain training bit for bit. `None` disables the
    /// penalty entirely.
    pub mitigation_alpha: Option<f64>,
    /// How the penalty aggregates over channels (layer mean by default).
    #[serde(default)]
    pub mitigation_variant: crate::mitigation::RegularizerVariant,
}

impl TrainConfig {
    /// Defaults sized for the desk-scale experiments.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 256,
            epochs: 100,
            optimizer: OptimizerKind::adam(),
            seed,
            mitigation_alpha: None,
            mitigation_variant: crate::mitigation::RegularizerVariant::LayerMean,
        }
    }
}

/// One epoch's evaluation snapshot, measured in inference mode over the full
/// training set after the epoch's updates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochTrace {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean training loss over the epoch's optimization batches.
    pub train_loss: f64,
    pub clean_loss: f64,
    pub clean_acc: f64,
    /// `None` when the dataset has no corrupted examples.
    pub corrupted_loss: Option<f64>,
    pub corrupted_acc: Option<f64>,
}

/// First epoch (1-based) whose corrupted-subset loss drops below `threshold`.
pub fn epochs_until(trace: &[EpochTrace], threshold: f64) -> Option<usize> {
    trace
        .iter()
        .find(|t| t.corrupted_loss.is_some_and(|l| l < threshold))
        .map(|t| t.epoch)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Train `net` on `dataset`, returning one trace entry per epoch.
///
/// Each epoch visits every example once in a freshly shuffled order. When the
/// network normalizes activations, a trailing batch of size 1 is merged into
/// the previous batch (batch statistics need at least two samples). The
/// objective is averaged over the batch; with the mitigation penalty active
/// the per-batch objective becomes
/// `alpha * mean_CE + (1 - alpha) / B * sum_layers log((mean gamma / mean sigma)^2)`,
/// which leaves `alpha = 1` exactly equal to plain training.
pub fn train(net: &mut Network, dataset: &Dataset, config: &TrainConfig) -> Result<Vec<EpochTrace>> {
    dataset.validate()?;
    if dataset.feature_dim() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "train input dimension",
            expected: net.input_dim().to_string(),
            found: dataset.feature_dim().to_string(),
        });
    }
    if dataset.num_classes != net.num_classes() {
        return Err(Error::ShapeMismatch {
            context: "train class count",
            expected: net.num_classes().to_string(),
            found: dataset.num_classes.to_string(),
        });
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and non-negative, got {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if let Some(alpha) = config.mitigation_alpha {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mitigation alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !net.has_batch_norm() {
            return Err(Error::Model(
                "mitigation penalty requires a network with normalization layers".into(),
            ));
        }
    }

    let n = dataset.len();
    let merge_tiny_tail = net.has_batch_norm();
    let mut adam = match config.optimizer {
        OptimizerKind::Adam { .. } => Some(AdamState {
            m: vec![0.0; net.param_count()],
            v: vec![0.0; net.param_count()],
            t: 0,
        }),
        OptimizerKind::Sgd => None,
    };

    let mut traces = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = Rng::new(derive_seed(config.seed, "shuffle", epoch as u64));
        rng.shuffle(&mut order);

        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        if merge_tiny_tail && batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
            let start = (batches.len() - 2) * config.batch_size;
            batches.pop();
            batches.pop();
            batches.push(&order[start..]);
        }

        net.set_mode(Mode::Train);
        let mut loss_sum = 0.0;
        for (batch_index, batch) in batches.iter().enumerate() {
            let features = dataset.features_of(batch);
            let labels = dataset.labels_of(batch);
            let (loss, _probs, caches) = forward(net, &features, &labels).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    epoch,
                    batch: batch_index,
                },
                other => other,
            })?;
            loss_sum += loss;
            let mut grads = backward(net, &caches)?;

            if let Some(alpha) = config.mitigation_alpha {
                apply_mitigation(net, &mut grads, alpha, batch.len(), config.mitigation_variant)?;
            }

            let mut flat = grads.flatten();
            if !flat.iter().all(|g| g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_index,
                });
            }
            match (&config.optimizer, adam.as_mut()) {
                (OptimizerKind::Sgd, _) => {
                    let mut params = net.flat_params();
                    for (p, g) in params.iter_mut().zip(flat.iter()) {
                        *p -= config.learning_rate * g;
                    }
                    net.set_flat_params(&params)?;
                }
                (
                    OptimizerKind::Adam {
                        beta1,
                        beta2,
                        epsilon,
                    },
                    Some(state),
                ) => {
                    state.t += 1;
                    let bc1 = 1.0 - beta1.powi(state.t as i32);
                    let bc2 = 1.0 - beta2.powi(state.t as i32);
                    let mut params = net.flat_params();
                    for i in 0..params.len() {
                        let g = flat[i];
                        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
                        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
                        let m_hat = state.m[i] / bc1;
                        let v_hat = state.v[i] / bc2;
                        params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                    net.set_flat_params(&params)?;
                }
                (OptimizerKind::Adam { .. }, None) => unreachable!(),
            }
            flat.clear();
        }

        let train_loss = loss_sum / batches.len() as f64;
        let trace = evaluate_epoch(net, dataset, epoch, train_loss, config.batch_size)
            // A non-finite evaluation means the epoch's updates blew the
            // weights up even though every optimization batch stayed finite.
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged {
                    epoch,
                    batch: batches.len().saturating_sub(1),
                },
                other => other,
            })?;
        traces.push(trace);
    }
    net.set_mode(Mode::Eval);
    Ok(traces)
}

/// Blend cross-entropy gradients with the scale-ratio penalty gradient.
///
/// The CE part is already a batch mean, so every gradient is scaled by
/// `alpha` and each normalization layer's gamma picks up
/// `(1 - alpha) * 2 / (mean_gamma * channels * batch)` — the gradient of
/// `(1 - alpha) / B * log((mean gamma / mean sigma)^2)` with sigma held fixed.
fn apply_mitigation(
    net: &Network,
    grads: &mut super::backward::Gradients,
    alpha: f64,
    batch: usize,
    variant: crate::mitigation::RegularizerVariant,
) -> Result<()> {
    for layer_grads in &mut grads.layers {
        match layer_grads {
            super::backward::LayerGrads::Dense { weights, bias } => {
                for g in weights.data_mut() {
                    *g *= alpha;
                }
                for g in bias.iter_mut() {
                    *g *= alpha;
                }
            }
            super::backward::LayerGrads::BatchNorm { gamma, beta } => {
                for g in gamma.iter_mut() {
                    *g *= alpha;
                }
                for g in beta.iter_mut() {
                    *g *= alpha;
                }
            }
            super::backward::LayerGrads::None => {}
        }
    }
    // The penalty sums over examples implicitly through the summed objective;
    // dividing by the batch size keeps the optimizer on the mean scale.
    for push in crate::mitigation::regularizer_gradient(net, alpha, variant)? {
        if let super::backward::LayerGrads::BatchNorm { gamma, .. } =
            &mut grads.layers[push.layer_index]
        {
            for (g, p) in gamma.iter_mut().zip(&push.per_channel) {
                *g += p / batch as f64;
            }
        }
    }
    Ok(())
}

/// Inference-mode pass over the whole dataset, split by provenance.
fn evaluate_epoch(
    net: &mut Network,
    dataset: &Dataset,
    epoch: usize,
    train_loss: f64,
    batch_size: usize,
) -> Result<EpochTrace> {
    net.set_mode(Mode::Eval);
    let mut clean = Accumulator::default();
    let mut corrupted = Accumulator::default();
    let all: Vec<usize> = (0..dataset.len()).collect();
    for batch in all.chunks(batch_size.max(1)) {
        let features = dataset.features_of(batch);
        let labels = dataset.labels_of(batch);
        let (_loss, _probs, caches) = forward(net, &features, &labels)?;
        for (pos, &i) in batch.iter().enumerate() {
            let loss = caches.sample_losses[pos];
            let logits = caches.logits.row(pos);
            let pred = argmax(logits);
            let correct = pred == dataset.examples[i].label;
            if dataset.examples[i].provenance.is_clean() {
                clean.push(loss, correct);
            } else {
                corrupted.push(loss, correct);
            }
        }
    }
    net.set_mode(Mode::Train);
    Ok(EpochTrace {
        epoch,
        train_loss,
        clean_loss: clean.mean_loss(),
        clean_acc: clean.accuracy(),
        corrupted_loss: corrupted.mean_loss_opt(),
        corrupted_acc: corrupted.accuracy_opt(),
    })
}

#[derive(Default)]
struct Accumulator {
    loss: f64,
    correct: usize,
    count: usize,
}

impl Accumulator {
    fn push(&mut self, loss: f64, correct: bool) {
        self.loss += loss;
        self.correct += correct as usize;
        self.count += 1;
    }
    fn mean_loss(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.loss / self.count as f64
        }
    }
    fn accuracy(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.correct as f64 / self.count as f64
        }
    }
    fn mean_loss_opt(&self) -> Option<f64> {
        (self.count > 0).then(|| self.loss / self.count as f64)
    }
    fn accuracy_opt(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
