//! Forward pass and its caches.

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt, Tensor};

use super::batchnorm::{bn_forward_eval, BnCache};
use super::{bn_forward, Layer, Mode, Network};

/// Per-layer values retained for the backward passes.
#[derive(Debug, Clone)]
pub enum LayerCache {
    /// Input the dense layer saw.
    Dense { input: Tensor },
    BatchNorm(BnCache),
    /// Which activations were strictly positive.
    Relu { active: Vec<bool> },
    Head,
}

/// Everything a backward pass needs about one forward pass.
#[derive(Debug, Clone)]
pub struct Caches {
    pub mode: Mode,
    pub batch_size: usize,
    pub labels: Vec<usize>,
    pub layer_caches: Vec<LayerCache>,
    pub logits: Tensor,
    /// Softmax probabilities, `B x num_classes`.
    pub probs: Tensor,
    /// Per-sample cross-entropy losses (the mean of these is the batch loss).
    pub sample_losses: Vec<f64>,
}

/// Run the network on a batch under its current [`Mode`] and compute the mean
/// cross-entropy loss.
///
/// Returns `(loss, logits, caches)`. In training mode the normalization
/// layers consume batch statistics and update their running estimates (hence
/// `&mut`); in evaluation mode nothing is mutated and two consecutive calls
/// are bit-identical.
pub fn forward(net: &mut Network, batch: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Caches)> {
    let mode = net.mode;
    match mode {
        Mode::Eval => eval_forward(net, batch, labels),
        Mode::Train => {
            validate_input(net, batch, labels)?;
            let mut cur = batch.clone();
            let mut layer_caches = Vec::with_capacity(net.layers.len());
            for layer in &mut net.layers {
                match layer {
                    Layer::Dense(d) => {
                        layer_caches.push(LayerCache::Dense { input: cur.clone() });
                        cur = dense_forward(d, &cur);
                    }
                    Layer::BatchNorm(bn) => {
                        let (out, cache) = bn_forward(bn, &cur, Mode::Train)?;
                        layer_caches.push(LayerCache::BatchNorm(cache));
                        cur = out;
                    }
                    Layer::Relu => {
                        let active = relu_in_place(&mut cur);
                        layer_caches.push(LayerCache::Relu { active });
                    }
                    Layer::SoftmaxCrossEntropyHead => {
                        layer_caches.push(LayerCache::Head);
                    }
                }
            }
            finish(mode, cur, labels, layer_caches)
        }
    }
}

/// Evaluation-mode forward pass through `&Network`: never mutates, valid for
/// any batch size ≥ 1. The network's `mode` field is ignored — this is the
/// pure path.
pub fn eval_forward(net: &Network, batch: &Tensor, labels: &[usize]) -> Result<(f64, Tensor, Caches)> {
    validate_input(net, batch, labels)?;
    let mut cur = batch.clone();
    let mut layer_caches = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        match layer {
            Layer::Dense(d) => {
                layer_caches.push(LayerCache::Dense { input: cur.clone() });
                cur = dense_forward(d, &cur);
            }
            Layer::BatchNorm(bn) => {
                let (out, cache) = bn_forward_eval(bn, &cur)?;
                layer_caches.push(LayerCache::BatchNorm(cache));
                cur = out;
            }
            Layer::Relu => {
                let active = relu_in_place(&mut cur);
                layer_caches.push(LayerCache::Relu { active });
            }
            Layer::SoftmaxCrossEntropyHead => {
                layer_caches.push(LayerCache::Head);
            }
        }
    }
    finish(Mode::Eval, cur, labels, layer_caches)
}

/// Evaluation-mode logits without a loss (no labels required).
pub fn eval_logits(net: &Network, batch: &Tensor) -> Result<Tensor> {
    if batch.shape().len() != 2 || batch.cols() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "eval_logits",
            expected: format!("B x {}", net.input_dim()),
            found: format!("{:?}", batch.shape()),
        });
    }
    batch.validate_finite("eval_logits input")?;
    let mut cur = batch.clone();
    for layer in &net.layers {
        match layer {
            Layer::Dense(d) => cur = dense_forward(d, &cur),
            Layer::BatchNorm(bn) => cur = bn_forward_eval(bn, &cur)?.0,
            Layer::Relu => {
                relu_in_place(&mut cur);
            }
            Layer::SoftmaxCrossEntropyHead => {}
        }
    }
    Ok(cur)
}

fn validate_input(net: &Network, batch: &Tensor, labels: &[usize]) -> Result<()> {
    if batch.shape().len() != 2 || batch.cols() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "forward",
            expected: format!("B x {}", net.input_dim()),
            found: format!("{:?}", batch.shape()),
        });
    }
    if batch.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if batch.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "forward",
            expected: format!("{} labels", batch.rows()),
            found: format!("{} labels", labels.len()),
        });
    }
    let k = net.num_classes();
    for &l in labels {
        if l >= k {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: k,
            });
        }
    }
    batch.validate_finite("forward input")
}

fn dense_forward(d: &super::DenseLayer, x: &Tensor) -> Tensor {
    let mut out = matmul_nt(x, &d.weights);
    for i in 0..out.rows() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(&d.bias) {
            *o += b;
        }
    }
    out
}

fn relu_in_place(t: &mut Tensor) -> Vec<bool> {
    let mut active = Vec::with_capacity(t.data().len());
    for v in t.data_mut() {
        let pos = *v > 0.0;
        active.push(pos);
        if !pos {
            *v = 0.0;
        }
    }
    active
}

/// Softmax + mean cross-entropy over the final logits.
fn finish(
    mode: Mode,
    logits: Tensor,
    labels: &[usize],
    layer_caches: Vec<LayerCache>,
) -> Result<(f64, Tensor, Caches)> {
    let (b, k) = (logits.rows(), logits.cols());
    let mut probs = Tensor::zeros(&[b, k]);
    let mut sample_losses = Vec::with_capacity(b);
    for i in 0..b {
        let row = logits.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - m).exp()).sum();
        let log_sum = m + sum_exp.ln();
        let pr = probs.row_mut(i);
        for j in 0..k {
            pr[j] = (row[j] - log_sum).exp();
        }
        sample_losses.push(log_sum - row[labels[i]]);
    }
    let loss = sample_losses.iter().sum::<f64>() / b as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "forward loss".into(),
        });
    }
    let caches = Caches {
        mode,
        batch_size: b,
        labels: labels.to_vec(),
        layer_caches,
        logits: logits.clone(),
        probs,
        sample_losses,
    };
    Ok((loss, logits, caches))
}
