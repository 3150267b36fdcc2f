//! Batch normalization over feature channels.
//!
//! Training mode normalizes each channel by the *batch* statistics (population
//! variance, i.e. divide by `B`) and folds those statistics into running
//! estimates; evaluation mode normalizes by the running estimates and mutates
//! nothing. The backward pass comes in two exact variants:
//!
//! * [`bn_backward`] — the full gradient, treating the batch mean and variance
//!   as functions of the whole batch (what SGD on the true loss requires);
//! * [`bn_backward_frozen`] — statistics held fixed at their forward-pass
//!   values, which is the convention under which one sample's loss has a
//!   well-defined private gradient (see `backward_per_sample`).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Mode;

/// Learnable scale/shift plus running statistics for one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Variance floor inside the square root.
    pub eps: f64,
    /// Running-statistics update weight: `new = (1-m)*old + m*batch`.
    pub momentum: f64,
}

impl BatchNormLayer {
    /// Identity-initialized layer: `gamma = 1`, `beta = 0`, running mean 0,
    /// running variance 1.
    pub fn new(channels: usize) -> BatchNormLayer {
        BatchNormLayer {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Per-channel effective scale `gamma / sqrt(running_var + eps)` — the
    /// factor by which the layer multiplies upstream signal at evaluation
    /// time, and the quantity whose growth marks amplified memorization.
    pub fn scale_ratios(&self) -> Vec<f64> {
        self.gamma
            .iter()
            .zip(&self.running_var)
            .map(|(&g, &v)| g / (v + self.eps).sqrt())
            .collect()
    }
}

/// Intermediate values the backward passes need.
#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized activations `(z - mean) / sigma_eff`, before scale/shift.
    pub normalized: Tensor,
    /// Per-channel `1 / sqrt(var + eps)` actually used by the forward pass.
    pub inv_std: Vec<f64>,
    /// Per-channel `sqrt(var + eps)` actually used by the forward pass.
    pub sigma_eff: Vec<f64>,
    /// Mode the forward pass ran in.
    pub mode: Mode,
}

/// Forward pass. `batch` is `B x C`.
///
/// Training mode requires `B >= 2` (a single sample has no batch variance),
/// uses population statistics, and updates the running estimates in place.
/// Evaluation mode uses the running estimates and leaves `state` untouched.
pub fn bn_forward(state: &mut BatchNormLayer, batch: &Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
    match mode {
        Mode::Train => bn_forward_train(state, batch),
        Mode::Eval => bn_forward_eval(state, batch),
    }
}

fn check_shape(state: &BatchNormLayer, batch: &Tensor) -> Result<(usize, usize)> {
    if batch.shape().len() != 2 || batch.cols() != state.channels() {
        return Err(Error::ShapeMismatch {
            context: "bn_forward",
            expected: format!("B x {}", state.channels()),
            found: format!("{:?}", batch.shape()),
        });
    }
    Ok((batch.rows(), batch.cols()))
}

fn bn_forward_train(state: &mut BatchNormLayer, batch: &Tensor) -> Result<(Tensor, BnCache)> {
    let (b, c) = check_shape(state, batch)?;
    if b < 2 {
        return Err(Error::BatchTooSmall { size: b });
    }
    batch.validate_finite("bn_forward input")?;

    let inv_b = 1.0 / b as f64;
    let mut mean = vec![0.0; c];
    for i in 0..b {
        for (m, &z) in mean.iter_mut().zip(batch.row(i)) {
            *m += z;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_b);

    let mut var = vec![0.0; c];
    for i in 0..b {
        for (v, (&z, &m)) in var.iter_mut().zip(batch.row(i).iter().zip(&mean)) {
            let d = z - m;
            *v += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v *= inv_b);

    let sigma_eff: Vec<f64> = var.iter().map(|&v| (v + state.eps).sqrt()).collect();
    let inv_std: Vec<f64> = sigma_eff.iter().map(|&s| 1.0 / s).collect();

    let mut normalized = Tensor::zeros(&[b, c]);
    let mut out = Tensor::zeros(&[b, c]);
    for i in 0..b {
        let zr = batch.row(i);
        let nr = normalized.row_mut(i);
        for j in 0..c {
            nr[j] = (zr[j] - mean[j]) * inv_std[j];
        }
    }
    for i in 0..b {
        let nr = normalized.row(i).to_vec();
        let orow = out.row_mut(i);
        for j in 0..c {
            orow[j] = state.gamma[j] * nr[j] + state.beta[j];
        }
    }

    let m = state.momentum;
    for j in 0..c {
        state.running_mean[j] = (1.0 - m) * state.running_mean[j] + m * mean[j];
        state.running_var[j] = (1.0 - m) * state.running_var[j] + m * var[j];
    }

    Ok((
        out,
        BnCache {
            normalized,
            inv_std,
            sigma_eff,
            mode: Mode::Train,
        },
    ))
}

pub(crate) fn bn_forward_eval(state: &BatchNormLayer, batch: &Tensor) -> Result<(Tensor, BnCache)> {
    let (b, c) = check_shape(state, batch)?;
    batch.validate_finite("bn_forward input")?;

    let sigma_eff: Vec<f64> = state
        .running_var
        .iter()
        .map(|&v| (v + state.eps).sqrt())
        .collect();
    let inv_std: Vec<f64> = sigma_eff.iter().map(|&s| 1.0 / s).collect();

    let mut normalized = Tensor::zeros(&[b, c]);
    let mut out = Tensor::zeros(&[b, c]);
    for i in 0..b {
        let zr = batch.row(i);
        let nr = normalized.row_mut(i);
        for j in 0..c {
            nr[j] = (zr[j] - state.running_mean[j]) * inv_std[j];
        }
    }
    for i in 0..b {
        let nr = normalized.row(i).to_vec();
        let orow = out.row_mut(i);
        for j in 0..c {
            orow[j] = state.gamma[j] * nr[j] + state.beta[j];
        }
    }

    Ok((
        out,
        BnCache {
            normalized,
            inv_std,
            sigma_eff,
            mode: Mode::Eval,
        },
    ))
}

/// Gradients the full backward pass produces for one normalization layer.
#[derive(Debug, Clone)]
pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Full backward pass: batch statistics treated as functions of the batch.
///
/// Only valid for a cache produced in training mode — in evaluation mode the
/// statistics are constants and [`bn_backward_frozen`] is the correct (and
/// only) derivative.
pub fn bn_backward(state: &BatchNormLayer, cache: &BnCache, upstream: &Tensor) -> Result<BnGrads> {
    if cache.mode != Mode::Train {
        return Err(Error::InvalidArgument(
            "bn_backward requires a training-mode cache; use bn_backward_frozen for eval".into(),
        ));
    }
    let (b, c) = (upstream.rows(), upstream.cols());
    if cache.normalized.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            context: "bn_backward",
            expected: format!("{:?}", cache.normalized.shape()),
            found: format!("{:?}", upstream.shape()),
        });
    }

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    // sum_dxhat[j]   = sum_i dY[i,j] * gamma[j]
    // sum_dxhat_x[j] = sum_i dY[i,j] * gamma[j] * xhat[i,j]
    let mut sum_dxhat = vec![0.0; c];
    let mut sum_dxhat_x = vec![0.0; c];
    for i in 0..b {
        let ur = upstream.row(i);
        let nr = cache.normalized.row(i);
        for j in 0..c {
            dbeta[j] += ur[j];
            dgamma[j] += ur[j] * nr[j];
            let dxh = ur[j] * state.gamma[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_x[j] += dxh * nr[j];
        }
    }

    let inv_b = 1.0 / b as f64;
    let mut input = Tensor::zeros(&[b, c]);
    for i in 0..b {
        let ur = upstream.row(i);
        let nr = cache.normalized.row(i);
        let ir = input.row_mut(i);
        for j in 0..c {
            let dxh = ur[j] * state.gamma[j];
            ir[j] = cache.inv_std[j] * (dxh - inv_b * (sum_dxhat[j] + nr[j] * sum_dxhat_x[j]));
        }
    }

    Ok(BnGrads {
        input,
        gamma: dgamma,
        beta: dbeta,
    })
}

/// Backward pass with the normalization statistics frozen at the values the
/// forward pass used. Valid for caches from either mode.
pub fn bn_backward_frozen(state: &BatchNormLayer, cache: &BnCache, upstream: &Tensor) -> Result<BnGrads> {
    let (b, c) = (upstream.rows(), upstream.cols());
    if cache.normalized.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch {
            context: "bn_backward_frozen",
            expected: format!("{:?}", cache.normalized.shape()),
            found: format!("{:?}", upstream.shape()),
        });
    }

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut input = Tensor::zeros(&[b, c]);
    for i in 0..b {
        let ur = upstream.row(i);
        let nr = cache.normalized.row(i);
        let ir = input.row_mut(i);
        for j in 0..c {
            dbeta[j] += ur[j];
            dgamma[j] += ur[j] * nr[j];
            ir[j] = ur[j] * state.gamma[j] * cache.inv_std[j];
        }
    }

    Ok(BnGrads {
        input,
        gamma: dgamma,
        beta: dbeta,
    })
}
