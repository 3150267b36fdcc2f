//! Bridge between the closed-form single-channel model and the real engine.
//!
//! Builds the literal network the theory describes — one dense unit, an
//! optional one-channel normalization layer with pinned statistics, and a
//! two-logit readout `(0, a * activation)` whose softmax cross-entropy equals
//! binary logistic loss — then measures per-sample gradients with the same
//! machinery the experiments use and compares them against the closed forms.

use crate::error::Result;
use crate::nn::{
    backward_per_sample, eval_forward, per_sample_sq_grad_norms, BatchNormLayer, DenseLayer,
    GradScope, Layer, Mode, Network,
};
use crate::tensor::Tensor;

use super::{gamma_gradient, grad_norm_ratio};

/// One random state of the single-channel model.
#[derive(Debug, Clone)]
pub struct ReplicaState {
    /// First dense layer's weight row (the channel's read vector).
    pub w: Vec<f64>,
    /// The outlier input.
    pub x: Vec<f64>,
    /// Classifier coefficient reading the (normalized) activation.
    pub a: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Pinned channel mean.
    pub mu: f64,
    /// Pinned channel variance (the effective sigma is `sqrt(var + eps)`).
    pub var: f64,
    /// Binary label, class 1 meaning "the `a`-weighted logit is correct".
    pub label: usize,
}

/// Everything the bridge measures for one state: the engine side via real
/// forward/backward passes, the theory side via closed forms.
#[derive(Debug, Clone, Copy)]
pub struct BridgeMeasurement {
    pub engine_ratio: f64,
    pub theory_ratio: f64,
    pub engine_gamma_grad: f64,
    pub theory_gamma_grad: f64,
    pub margin_normalized: f64,
    pub margin_plain: f64,
}

/// Build the normalized and plain engine replicas of `state`.
///
/// Both networks share the dense read vector and the readout
/// `[[0], [a]]`; the normalized one inserts a one-channel layer with
/// `(gamma, beta)` and pinned running statistics `(mu, var)`. Returned in
/// inference mode so the pinned statistics are what the forward pass uses.
pub fn single_channel_replica(state: &ReplicaState) -> Result<(Network, Network)> {
    let d = state.w.len();
    let read = DenseLayer {
        weights: Tensor::from_vec(&[1, d], state.w.clone())?,
        bias: vec![0.0],
    };
    let readout = DenseLayer {
        weights: Tensor::from_vec(&[2, 1], vec![0.0, state.a])?,
        bias: vec![0.0, 0.0],
    };
    let mut bn = BatchNormLayer::new(1);
    bn.gamma[0] = state.gamma;
    bn.beta[0] = state.beta;
    bn.running_mean[0] = state.mu;
    bn.running_var[0] = state.var;

    let mut normalized = Network::new(vec![
        Layer::Dense(read.clone()),
        Layer::BatchNorm(bn),
        Layer::Dense(readout.clone()),
        Layer::SoftmaxCrossEntropyHead,
    ])?;
    normalized.set_mode(Mode::Eval);
    let mut plain = Network::new(vec![
        Layer::Dense(read),
        Layer::Dense(readout),
        Layer::SoftmaxCrossEntropyHead,
    ])?;
    plain.set_mode(Mode::Eval);
    Ok((normalized, plain))
}

/// Run both replicas on the outlier and compare per-sample gradient
/// measurements against the closed forms.
///
/// `engine_ratio` is the normalized-over-plain ratio of squared per-sample
/// gradient norms over the first dense layer's weights; `theory_ratio` is
/// the closed form at the margins both models actually produced, with
/// `sigma = sqrt(var + eps)` exactly as the engine's inference path uses.
pub fn single_channel_grad_ratio(state: &ReplicaState) -> Result<BridgeMeasurement> {
    let (normalized, plain) = single_channel_replica(state)?;
    let batch = Tensor::from_vec(&[1, state.x.len()], state.x.clone())?;
    let labels = [state.label];

    let (_, _, caches_bn) = eval_forward(&normalized, &batch, &labels)?;
    let (_, _, caches_plain) = eval_forward(&plain, &batch, &labels)?;

    let y = if state.label == 1 { 1.0 } else { -1.0 };
    let z_bn = caches_bn.logits.row(0)[1] - caches_bn.logits.row(0)[0];
    let z_plain = caches_plain.logits.row(0)[1] - caches_plain.logits.row(0)[0];

    let norm_bn = per_sample_sq_grad_norms(&normalized, &caches_bn, GradScope::FirstDenseWeights)?;
    let norm_plain =
        per_sample_sq_grad_norms(&plain, &caches_plain, GradScope::FirstDenseWeights)?;
    let engine_ratio = norm_bn[0] / norm_plain[0];

    let eps = match &normalized.layers[1] {
        Layer::BatchNorm(bn) => bn.eps,
        _ => unreachable!("replica layer 1 is the normalization layer"),
    };
    let sigma_eff = (state.var + eps).sqrt();
    let theory_ratio = grad_norm_ratio(y * z_bn, y * z_plain, state.gamma, sigma_eff);

    // Per-sample gradient entry for gamma: canonical layout puts the first
    // dense layer's d weights and 1 bias first, then gamma.
    let rows = backward_per_sample(&normalized, &caches_bn)?;
    let engine_gamma_grad = rows[0][state.w.len() + 1];
    let h: f64 = state
        .w
        .iter()
        .zip(&state.x)
        .map(|(wi, xi)| wi * xi)
        .sum();
    let t_hat = (h - state.mu) / sigma_eff;
    let theory_gamma_grad = gamma_gradient(y, z_bn, state.a, t_hat);

    Ok(BridgeMeasurement {
        engine_ratio,
        theory_ratio,
        engine_gamma_grad,
        theory_gamma_grad,
        margin_normalized: y * z_bn,
        margin_plain: y * z_plain,
    })
}
