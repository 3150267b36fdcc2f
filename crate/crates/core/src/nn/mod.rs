//! From-scratch feed-forward engine: dense layers, batch normalization, ReLU,
//! and a softmax cross-entropy head, with exact manual gradients.
//!
//! Two backward conventions coexist and are both exposed:
//!
//! * the **full** pass ([`backward`]) differentiates through the batch
//!   statistics of every normalization layer — this is the gradient SGD/Adam
//!   train on;
//! * the **frozen** pass ([`backward_frozen`], [`backward_per_sample`]) holds
//!   each layer's statistics fixed at the values the forward pass used, which
//!   is the convention under which an individual sample has a well-defined
//!   gradient of its own loss.
//!
//! Training is deterministic: a seed fixes initialization and every shuffle,
//! and rerunning with the same seed reproduces parameters bit for bit.

mod backward;
mod batchnorm;
mod forward;
mod persist;
mod train;

pub use backward::{
    backward, backward_frozen, backward_per_sample, per_sample_sq_grad_norms, GradScope,
    Gradients, LayerGrads,
};
pub use batchnorm::{
    bn_backward, bn_backward_frozen, bn_forward, BatchNormLayer, BnCache, BnGrads,
};
pub use forward::{eval_forward, eval_logits, forward, Caches, LayerCache};
pub use persist::{load_model, save_model};
pub use train::{epochs_until, train, EpochTrace, OptimizerKind, TrainConfig};

use crate::error::{Error, Result};
use crate::prng::{derive_seed, Rng};
use crate::tensor::Tensor;

/// Whether normalization layers use batch statistics (and update running
/// estimates) or the stored running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer, `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`, drawn
    /// row-major), zero biases.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut Rng) -> DenseLayer {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data: Vec<f64> = (0..inputs * outputs)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        DenseLayer {
            weights: Tensor::from_vec(&[outputs, inputs], data).expect("init shape"),
            bias: vec![0.0; outputs],
        }
    }
}

/// One stage of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    Relu,
    /// Terminal stage: softmax over the incoming logits plus mean
    /// cross-entropy against integer labels.
    SoftmaxCrossEntropyHead,
}

/// Feed-forward network: a validated layer list plus the active [`Mode`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub mode: Mode,
}

impl Network {
    /// Validate and wrap a layer list. Rules: exactly one head, in final
    /// position; at least one dense layer; consecutive widths must chain.
    /// New networks start in training mode.
    pub fn new(layers: Vec<Layer>) -> Result<Network> {
        let heads = layers
            .iter()
            .filter(|l| matches!(l, Layer::SoftmaxCrossEntropyHead))
            .count();
        if heads != 1 {
            return Err(Error::InvalidArgument(format!(
                "network needs exactly one softmax cross-entropy head, found {heads}"
            )));
        }
        if !matches!(layers.last(), Some(Layer::SoftmaxCrossEntropyHead)) {
            return Err(Error::InvalidArgument(
                "the softmax cross-entropy head must be the final layer".into(),
            ));
        }
        if !layers.iter().any(|l| matches!(l, Layer::Dense(_))) {
            return Err(Error::InvalidArgument(
                "network needs at least one dense layer".into(),
            ));
        }
        let mut width: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    if let Some(w) = width {
                        if w != d.inputs() {
                            return Err(Error::ShapeMismatch {
                                context: "Network::new",
                                expected: format!("dense layer {i} with {w} inputs"),
                                found: format!("{} inputs", d.inputs()),
                            });
                        }
                    }
                    width = Some(d.outputs());
                }
                Layer::BatchNorm(bn) => {
                    if let Some(w) = width {
                        if w != bn.channels() {
                            return Err(Error::ShapeMismatch {
                                context: "Network::new",
                                expected: format!("batch norm at layer {i} with {w} channels"),
                                found: format!("{} channels", bn.channels()),
                            });
                        }
                    } else {
                        width = Some(bn.channels());
                    }
                }
                Layer::Relu | Layer::SoftmaxCrossEntropyHead => {}
            }
        }
        Ok(Network {
            layers,
            mode: Mode::Train,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    /// Input dimension expected by the first dense layer.
    pub fn input_dim(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.inputs()),
                _ => None,
            })
            .expect("validated network has a dense layer")
    }

    /// Number of classes produced by the final dense layer.
    pub fn num_classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense(d) => Some(d.outputs()),
                _ => None,
            })
            .expect("validated network has a dense layer")
    }

    /// Total number of trainable parameters (dense weights/biases and
    /// normalization scales/shifts; running statistics are not trainable).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.weights.data().len() + d.bias.len(),
                Layer::BatchNorm(bn) => 2 * bn.channels(),
                _ => 0,
            })
            .sum()
    }

    /// Normalization layers with their positions in the layer list.
    pub fn batch_norm_layers(&self) -> Vec<(usize, &BatchNormLayer)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::BatchNorm(bn) => Some((i, bn)),
                _ => None,
            })
            .collect()
    }

    /// Trainable parameters flattened in the canonical order (layer by layer;
    /// dense: weights row-major then bias; normalization: gamma then beta).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights.data());
                    out.extend_from_slice(&d.bias);
                }
                Layer::BatchNorm(bn) => {
                    out.extend_from_slice(&bn.gamma);
                    out.extend_from_slice(&bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    /// Overwrite all trainable parameters from a flat vector in the canonical
    /// order. Running statistics are untouched.
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                context: "set_flat_params",
                expected: format!("{} parameters", self.param_count()),
                found: format!("{}", params.len()),
            });
        }
        let mut cursor = 0;
        for slice in self.param_slices_mut() {
            slice.copy_from_slice(&params[cursor..cursor + slice.len()]);
            cursor += slice.len();
        }
        Ok(())
    }

    /// Mutable slices over every trainable parameter, in layer order
    /// (dense: weights then bias; normalization: gamma then beta). This is
    /// the canonical flat ordering used by optimizers, per-sample gradients,
    /// and the persistence blob.
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weights.data_mut());
                    out.push(d.bias.as_mut_slice());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_mut_slice());
                    out.push(bn.beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }
}

/// Shape of a multi-layer perceptron for the experiment pipeline: dense →
/// (normalization) → ReLU per hidden stage, then a dense classifier and the
/// softmax head. `batch_norm: false` yields the identical layer list with the
/// normalization layers removed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub batch_norm: bool,
}

impl ArchSpec {
    /// The desk-scale architecture used throughout the experiment suite:
    /// 784 → 256 → 128 → `num_classes`.
    pub fn desk(num_classes: usize, batch_norm: bool) -> ArchSpec {
        ArchSpec {
            input_dim: 784,
            hidden: vec![256, 128],
            num_classes,
            batch_norm,
        }
    }

    /// Build and initialize the network.
    ///
    /// Dense layer `k` draws its weights from `derive_seed(seed, "dense-init",
    /// k)`, so the batch-norm and no-batch-norm variants of the same spec
    /// start from identical dense parameters — paired comparisons differ only
    /// in the presence of normalization layers.
    pub fn build(&self, seed: u64) -> Result<Network> {
        if self.input_dim == 0 || self.num_classes == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument(
                "architecture dimensions must be positive".into(),
            ));
        }
        let mut layers = Vec::new();
        let mut prev = self.input_dim;
        let mut dense_idx = 0u64;
        for &h in &self.hidden {
            let mut rng = Rng::new(derive_seed(seed, "dense-init", dense_idx));
            layers.push(Layer::Dense(DenseLayer::glorot(prev, h, &mut rng)));
            dense_idx += 1;
            if self.batch_norm {
                layers.push(Layer::BatchNorm(BatchNormLayer::new(h)));
            }
            layers.push(Layer::Relu);
            prev = h;
        }
        let mut rng = Rng::new(derive_seed(seed, "dense-init", dense_idx));
        layers.push(Layer::Dense(DenseLayer::glorot(prev, self.num_classes, &mut rng)));
        layers.push(Layer::SoftmaxCrossEntropyHead);
        Network::new(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_malformed_layer_lists() {
        let mut rng = Rng::new(1);
        let d = |i, o, rng: &mut Rng| Layer::Dense(DenseLayer::glorot(i, o, rng));

        // No head.
        assert!(Network::new(vec![d(4, 2, &mut rng)]).is_err());
        // Head not last.
        assert!(
            Network::new(vec![Layer::SoftmaxCrossEntropyHead, d(4, 2, &mut rng)]).is_err()
        );
        // Two heads.
        assert!(Network::new(vec![
            d(4, 2, &mut rng),
            Layer::SoftmaxCrossEntropyHead,
            Layer::SoftmaxCrossEntropyHead,
        ])
        .is_err());
        // Width mismatch between dense layers.
        assert!(Network::new(vec![
            d(4, 3, &mut rng),
            d(2, 5, &mut rng),
            Layer::SoftmaxCrossEntropyHead,
        ])
        .is_err());
        // Normalization width mismatch.
        assert!(Network::new(vec![
            d(4, 3, &mut rng),
            Layer::BatchNorm(BatchNormLayer::new(2)),
            Layer::SoftmaxCrossEntropyHead,
        ])
        .is_err());
        // A correct list passes.
        assert!(Network::new(vec![
            d(4, 3, &mut rng),
            Layer::BatchNorm(BatchNormLayer::new(3)),
            Layer::Relu,
            d(3, 2, &mut rng),
            Layer::SoftmaxCrossEntropyHead,
        ])
        .is_ok());
    }

    #[test]
    fn desk_arch_has_expected_shape_and_param_count() {
        let net = ArchSpec::desk(10, true).build(7).unwrap();
        assert_eq!(net.input_dim(), 784);
        assert_eq!(net.num_classes(), 10);
        assert!(net.has_batch_norm());
        // Dense: 784*256+256 + 256*128+128 + 128*10+10; BN: 2*(256+128).
        let dense = 784 * 256 + 256 + 256 * 128 + 128 + 128 * 10 + 10;
        assert_eq!(net.param_count(), dense + 2 * (256 + 128));

        let plain = ArchSpec::desk(10, false).build(7).unwrap();
        assert!(!plain.has_batch_norm());
        assert_eq!(plain.param_count(), dense);
    }

    #[test]
    fn paired_builds_share_dense_initialization() {
        let with_bn = ArchSpec::desk(10, true).build(41).unwrap();
        let without = ArchSpec::desk(10, false).build(41).unwrap();
        let dense
            = |n: &Network| -> Vec<DenseLayer> {
            n.layers
                .iter()
                .filter_map(|l| match l {
                    Layer::Dense(d) => Some(d.clone()),
                    _ => None,
                })
                .collect()
        };
        assert_eq!(dense(&with_bn), dense(&without));
        // Different seeds give different weights.
        let other = ArchSpec::desk(10, true).build(42).unwrap();
        assert_ne!(dense(&with_bn), dense(&other));
    }

    #[test]
    fn glorot_init_respects_fan_limit_and_zero_bias() {
        let mut rng = Rng::new(2);
        let d = DenseLayer::glorot(100, 50, &mut rng);
        let limit = (6.0f64 / 150.0).sqrt();
        assert!(d.weights.data().iter().all(|w| w.abs() <= limit));
        assert!(d.bias.iter().all(|&b| b == 0.0));
        // Spread should actually use the range, not cluster at zero.
        let max = d.weights.data().iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(max > 0.8 * limit);
    }
}
