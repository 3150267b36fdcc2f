//! Backward passes: full, frozen-statistics, per-sample, and closed-form
//! per-sample gradient norms.

use crate::error::{Error, Result};
use crate::tensor::{accumulate_outer, matmul_nn, Tensor};

use super::{bn_backward, bn_backward_frozen, Caches, Layer, LayerCache, Network};

/// Gradient of one layer's trainable parameters.
#[derive(Debug, Clone)]
pub enum LayerGrads {
    Dense { weights: Tensor, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
    /// Layer with no trainable parameters.
    None,
}

/// Gradients for every layer, aligned with `Network::layers`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// Parameter-order slices matching `Network::param_slices_mut`.
    pub(crate) fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerGrads::Dense { weights, bias } => {
                    out.push(weights.data());
                    out.push(bias.as_slice());
                }
                LayerGrads::BatchNorm { gamma, beta } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerGrads::None => {}
            }
        }
        out
    }

    /// Flatten into the canonical parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in self.param_slices() {
            out.extend_from_slice(s);
        }
        out
    }
}

fn check_caches(net: &Network, caches: &Caches) -> Result<()> {
    if caches.layer_caches.len() != net.layers.len() {
        return Err(Error::ShapeMismatch {
            context: "backward",
            expected: format!("{} layer caches", net.layers.len()),
            found: format!("{}", caches.layer_caches.len()),
        });
    }
    Ok(())
}

/// Seed gradient at the logits for the **mean** cross-entropy loss:
/// `(softmax - onehot) / B`.
fn head_delta_mean(caches: &Caches) -> Tensor {
    let mut delta = caches.probs.clone();
    let inv_b = 1.0 / caches.batch_size as f64;
    for (i, &label) in caches.labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv_b;
        }
    }
    delta
}

/// Seed gradient at the logits for **each sample's own** loss:
/// `softmax_i - onehot_i` per row.
fn head_delta_per_sample(caches: &Caches) -> Tensor {
    let mut delta = caches.probs.clone();
    for (i, &label) in caches.labels.iter().enumerate() {
        delta.row_mut(i)[label] -= 1.0;
    }
    delta
}

fn column_sums(t: &Tensor) -> Vec<f64> {
    let mut out = vec![0.0; t.cols()];
    for i in 0..t.rows() {
        for (o, &v) in out.iter_mut().zip(t.row(i)) {
            *o += v;
        }
    }
    out
}

fn apply_relu_mask(delta: &mut Tensor, active: &[bool]) {
    for (v, &a) in delta.data_mut().iter_mut().zip(active) {
        if !a {
            *v = 0.0;
        }
    }
}

enum BnConvention {
    /// Differentiate through the batch statistics (training gradient).
    Full,
    /// Hold statistics at their forward-pass values.
    Frozen,
}

fn backward_impl(net: &Network, caches: &Caches, convention: BnConvention) -> Result<Gradients> {
    check_caches(net, caches)?;
    let mut delta = head_delta_mean(caches);
    let mut grads: Vec<LayerGrads> = Vec::with_capacity(net.layers.len());

    for (layer, cache) in net.layers.iter().zip(&caches.layer_caches).rev() {
        match (layer, cache) {
            (Layer::SoftmaxCrossEntropyHead, LayerCache::Head) => {
                grads.push(LayerGrads::None);
            }
            (Layer::Relu, LayerCache::Relu { active }) => {
                apply_relu_mask(&mut delta, active);
                grads.push(LayerGrads::None);
            }
            (Layer::Dense(d), LayerCache::Dense { input }) => {
                let mut dw = Tensor::zeros(&[d.outputs(), d.inputs()]);
                accumulate_outer(&delta, input, &mut dw);
                let db = column_sums(&delta);
                delta = matmul_nn(&delta, &d.weights);
                grads.push(LayerGrads::Dense {
                    weights: dw,
                    bias: db,
                });
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                let g = match convention {
                    BnConvention::Full => bn_backward(bn, c, &delta)?,
                    BnConvention::Frozen => bn_backward_frozen(bn, c, &delta)?,
                };
                delta = g.input;
                grads.push(LayerGrads::BatchNorm {
                    gamma: g.gamma,
                    beta: g.beta,
                });
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "caches do not correspond to this network".into(),
                ));
            }
        }
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// Gradient of the mean batch loss with normalization statistics treated as
/// functions of the batch — the gradient used for training. Requires caches
/// from a training-mode forward pass when the network contains normalization
/// layers.
pub fn backward(net: &Network, caches: &Caches) -> Result<Gradients> {
    backward_impl(net, caches, BnConvention::Full)
}

/// Gradient of the mean batch loss with normalization statistics frozen at
/// their forward-pass values. Valid for caches from either mode.
pub fn backward_frozen(net: &Network, caches: &Caches) -> Result<Gradients> {
    backward_impl(net, caches, BnConvention::Frozen)
}

/// Per-sample gradients of each sample's **own** loss, under the frozen
/// convention (statistics pinned at the forward pass's values — batch
/// statistics for a training-mode cache, running statistics for an
/// evaluation-mode cache).
///
/// Returns one flat vector per sample in the canonical parameter order.
/// Averaging them over the batch reproduces [`backward_frozen`] exactly; for
/// a network without normalization layers that is also [`backward`].
///
/// Materializes `B x param_count` values — fine for verification and small
/// probes; use [`per_sample_sq_grad_norms`] when only magnitudes are needed.
pub fn backward_per_sample(net: &Network, caches: &Caches) -> Result<Vec<Vec<f64>>> {
    check_caches(net, caches)?;
    let b = caches.batch_size;
    let p = net.param_count();
    let mut out = vec![vec![0.0; p]; b];

    // Parameter offsets per layer in the canonical flat order.
    let mut offsets = Vec::with_capacity(net.layers.len());
    let mut cursor = 0usize;
    for layer in &net.layers {
        offsets.push(cursor);
        cursor += match layer {
            Layer::Dense(d) => d.weights.data().len() + d.bias.len(),
            Layer::BatchNorm(bn) => 2 * bn.channels(),
            _ => 0,
        };
    }

    let mut delta = head_delta_per_sample(caches);
    for (idx, (layer, cache)) in net.layers.iter().zip(&caches.layer_caches).enumerate().rev() {
        match (layer, cache) {
            (Layer::SoftmaxCrossEntropyHead, LayerCache::Head) => {}
            (Layer::Relu, LayerCache::Relu { active }) => {
                apply_relu_mask(&mut delta, active);
            }
            (Layer::Dense(d), LayerCache::Dense { input }) => {
                let (n_out, n_in) = (d.outputs(), d.inputs());
                let base = offsets[idx];
                for i in 0..b {
                    let dr = delta.row(i);
                    let xr = input.row(i);
                    let flat = &mut out[i];
                    for o in 0..n_out {
                        let row = &mut flat[base + o * n_in..base + (o + 1) * n_in];
                        let g = dr[o];
                        for (w, &x) in row.iter_mut().zip(xr) {
                            *w = g * x;
                        }
                    }
                    let bias = &mut flat[base + n_out * n_in..base + n_out * n_in + n_out];
                    bias.copy_from_slice(dr);
                }
                delta = matmul_nn(&delta, &d.weights);
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                let ch = bn.channels();
                let base = offsets[idx];
                for i in 0..b {
                    let dr = delta.row(i);
                    let nr = c.normalized.row(i);
                    let flat = &mut out[i];
                    for j in 0..ch {
                        flat[base + j] = dr[j] * nr[j]; // d gamma
                        flat[base + ch + j] = dr[j]; // d beta
                    }
                }
                let g = bn_backward_frozen(bn, c, &delta)?;
                delta = g.input;
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "caches do not correspond to this network".into(),
                ));
            }
        }
    }
    Ok(out)
}

/// Which parameters a per-sample gradient norm ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    /// Every trainable parameter.
    AllParams,
    /// Only the weight matrix of the first dense layer.
    FirstDenseWeights,
}

/// Squared per-sample gradient norms under the frozen convention, computed in
/// closed form without materializing the gradients.
///
/// For a dense layer the per-sample weight gradient is the outer product
/// `delta_i ⊗ x_i`, whose squared Frobenius norm is `|delta_i|² · |x_i|²`
/// (plus `|delta_i|²` for the bias); a normalization layer contributes
/// `sum_c delta²(xhat² + 1)`. Agrees with row-wise norms of
/// [`backward_per_sample`] to floating-point accuracy.
pub fn per_sample_sq_grad_norms(
    net: &Network,
    caches: &Caches,
    scope: GradScope,
) -> Result<Vec<f64>> {
    check_caches(net, caches)?;
    let b = caches.batch_size;
    let mut norms = vec![0.0; b];

    let first_dense_idx = net
        .layers
        .iter()
        .position(|l| matches!(l, Layer::Dense(_)))
        .expect("validated network has a dense layer");

    let mut delta = head_delta_per_sample(caches);
    for (idx, (layer, cache)) in net.layers.iter().zip(&caches.layer_caches).enumerate().rev() {
        match (layer, cache) {
            (Layer::SoftmaxCrossEntropyHead, LayerCache::Head) => {}
            (Layer::Relu, LayerCache::Relu { active }) => {
                apply_relu_mask(&mut delta, active);
            }
            (Layer::Dense(d), LayerCache::Dense { input }) => {
                match scope {
                    GradScope::AllParams => {
                        for i in 0..b {
                            let sd: f64 = delta.row(i).iter().map(|v| v * v).sum();
                            let sx: f64 = input.row(i).iter().map(|v| v * v).sum();
                            norms[i] += sd * (sx + 1.0);
                        }
                    }
                    GradScope::FirstDenseWeights => {
                        if idx == first_dense_idx {
                            for i in 0..b {
                                let sd: f64 = delta.row(i).iter().map(|v| v * v).sum();
                                let sx: f64 = input.row(i).iter().map(|v| v * v).sum();
                                norms[i] += sd * sx;
                            }
                        }
                    }
                }
                if idx != first_dense_idx {
                    delta = matmul_nn(&delta, &d.weights);
                } else {
                    // Nothing upstream of the first dense layer needs delta.
                    break;
                }
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) => {
                if scope == GradScope::AllParams {
                    for i in 0..b {
                        let dr = delta.row(i);
                        let nr = c.normalized.row(i);
                        let mut s = 0.0;
                        for j in 0..bn.channels() {
                            let d2 = dr[j] * dr[j];
                            s += d2 * (nr[j] * nr[j] + 1.0);
                        }
                        norms[i] += s;
                    }
                }
                let g = bn_backward_frozen(bn, c, &delta)?;
                delta = g.input;
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "caches do not correspond to this network".into(),
                ));
            }
        }
    }
    Ok(norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{central_diff_grad, max_rel_err};
    use crate::nn::{eval_forward, forward, ArchSpec};
    use crate::prng::Rng;

    fn random_batch(rng: &mut Rng, b: usize, d: usize) -> Tensor {
        let data: Vec<f64> = (0..b * d).map(|_| rng.uniform(-1.5, 1.5)).collect();
        Tensor::from_vec(&[b, d], data).unwrap()
    }

    fn arch(batch_norm: bool) -> ArchSpec {
        ArchSpec {
            input_dim: 7,
            hidden: vec![6, 5],
            num_classes: 4,
            batch_norm,
        }
    }

    #[test]
    fn full_backward_matches_finite_differences_with_batch_norm() {
        let net = arch(true).build(21).unwrap();
        let mut rng = Rng::new(22);
        let batch = random_batch(&mut rng, 9, 7);
        let labels: Vec<usize> = (0..9).map(|i| i % 4).collect();

        let (_, _, caches) = forward(&mut net.clone(), &batch, &labels).unwrap();
        let analytic = backward(&net, &caches).unwrap().flatten();

        let base = net.flat_params();
        let mut f = |p: &[f64]| {
            let mut probe = net.clone();
            probe.set_flat_params(p).unwrap();
            let (loss, _, _) = forward(&mut probe, &batch, &labels).unwrap();
            loss
        };
        let fd = central_diff_grad(&mut f, &base, 1e-5);
        let err = max_rel_err(&analytic, &fd);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn full_backward_matches_finite_differences_without_batch_norm() {
        let net = arch(false).build(23).unwrap();
        let mut rng = Rng::new(24);
        let batch = random_batch(&mut rng, 6, 7);
        let labels = vec![0, 1, 2, 3, 0, 1];

        let (_, _, caches) = forward(&mut net.clone(), &batch, &labels).unwrap();
        let analytic = backward(&net, &caches).unwrap().flatten();
        let frozen = backward_frozen(&net, &caches).unwrap().flatten();
        // Without normalization layers the two conventions coincide exactly.
        assert_eq!(analytic, frozen);

        let base = net.flat_params();
        let mut f = |p: &[f64]| {
            let mut probe = net.clone();
            probe.set_flat_params(p).unwrap();
            let (loss, _, _) = forward(&mut probe, &batch, &labels).unwrap();
            loss
        };
        let fd = central_diff_grad(&mut f, &base, 1e-5);
        assert!(max_rel_err(&analytic, &fd) < 1e-5);
    }

    #[test]
    fn per_sample_gradients_average_to_frozen_batch_gradient() {
        let net = arch(true).build(25).unwrap();
        let mut rng = Rng::new(26);
        let batch = random_batch(&mut rng, 8, 7);
        let labels: Vec<usize> = (0..8).map(|i| (i * 3) % 4).collect();

        let (_, _, caches) = forward(&mut net.clone(), &batch, &labels).unwrap();
        let per_sample = backward_per_sample(&net, &caches).unwrap();
        let frozen = backward_frozen(&net, &caches).unwrap().flatten();

        let p = frozen.len();
        assert!(per_sample.iter().all(|g| g.len() == p));
        for j in 0..p {
            let mean = per_sample.iter().map(|g| g[j]).sum::<f64>() / 8.0;
            assert!(
                (mean - frozen[j]).abs() < 1e-12 * frozen[j].abs().max(1.0),
                "param {j}: mean {mean} vs batch {}",
                frozen[j]
            );
        }
    }

    #[test]
    fn per_sample_gradient_matches_single_sample_finite_differences_in_eval() {
        // In eval mode the frozen convention is the true derivative, so a
        // single-sample finite-difference probe must agree with the
        // per-sample gradient row.
        let mut net = arch(true).build(27).unwrap();
        let mut rng = Rng::new(28);
        // Move running stats off their initial values first.
        let warm = random_batch(&mut rng, 16, 7);
        let warm_labels: Vec<usize> = (0..16).map(|i| i % 4).collect();
        forward(&mut net, &warm, &warm_labels).unwrap();

        let sample = random_batch(&mut rng, 1, 7);
        let label = vec![2usize];
        let (_, _, caches) = eval_forward(&net, &sample, &label).unwrap();
        let per_sample = backward_per_sample(&net, &caches).unwrap();
        assert_eq!(per_sample.len(), 1);

        let base = net.flat_params();
        let mut f = |p: &[f64]| {
            let mut probe = net.clone();
            probe.set_flat_params(p).unwrap();
            let (loss, _, _) = eval_forward(&probe, &sample, &label).unwrap();
            loss
        };
        let fd = central_diff_grad(&mut f, &base, 1e-5);
        assert!(max_rel_err(&per_sample[0], &fd) < 1e-5);
    }

    #[test]
    fn closed_form_norms_match_materialized_per_sample_gradients() {
        let net = arch(true).build(29).unwrap();
        let mut rng = Rng::new(30);
        let batch = random_batch(&mut rng, 10, 7);
        let labels: Vec<usize> = (0..10).map(|i| i % 4).collect();

        let (_, _, caches) = forward(&mut net.clone(), &batch, &labels).unwrap();
        let per_sample = backward_per_sample(&net, &caches).unwrap();
        let fast = per_sample_sq_grad_norms(&net, &caches, GradScope::AllParams).unwrap();
        for i in 0..10 {
            let explicit: f64 = per_sample[i].iter().map(|v| v * v).sum();
            assert!(
                (fast[i] - explicit).abs() < 1e-10 * explicit.max(1.0),
                "sample {i}: fast {} explicit {explicit}",
                fast[i]
            );
        }

        // First-layer scope: compare against the explicit slice.
        let first = per_sample_sq_grad_norms(&net, &caches, GradScope::FirstDenseWeights).unwrap();
        let w_len = 7 * 6; // first dense weights
        for i in 0..10 {
            let explicit: f64 = per_sample[i][..w_len].iter().map(|v| v * v).sum();
            assert!((first[i] - explicit).abs() < 1e-10 * explicit.max(1.0));
        }
    }

    #[test]
    fn backward_requires_matching_caches() {
        let net_a = arch(true).build(31).unwrap();
        let net_b = arch(false).build(31).unwrap();
        let mut rng = Rng::new(32);
        let batch = random_batch(&mut rng, 4, 7);
        let labels = vec![0, 1, 2, 3];
        let (_, _, caches) = forward(&mut net_a.clone(), &batch, &labels).unwrap();
        assert!(backward(&net_b, &caches).is_err());
    }

    #[test]
    fn full_backward_rejects_eval_caches_for_normalized_networks() {
        let net = arch(true).build(33).unwrap();
        let mut rng = Rng::new(34);
        let batch = random_batch(&mut rng, 4, 7);
        let labels = vec![0, 1, 2, 3];
        let (_, _, caches) = eval_forward(&net, &batch, &labels).unwrap();
        assert!(backward(&net, &caches).is_err());
        // The frozen pass is the defined derivative there.
        assert!(backward_frozen(&net, &caches).is_ok());
    }
}
