//! Scale-ratio regularization: a composite objective that trades
//! cross-entropy fit against the growth of normalization scales.
//!
//! The objective is
//!
//! ```text
//! J = alpha * Σᵢ CE(f(xᵢ), yᵢ)  +  (1 − alpha) * Σⱼ log((γ̄ⱼ / σ̄ⱼ)²)
//! ```
//!
//! summed over examples i and normalization layers j, with `alpha ∈ (0, 1]`.
//! By default γ̄ⱼ and σ̄ⱼ are the channel means of the layer's scale vector
//! and of `sqrt(batch_var + eps)`; a per-channel sum variant is selectable.
//! The penalty's gradient flows into the scale parameters only — σ is what
//! the layer divides by and is treated as a constant of the step, so the
//! regularizer never reaches the upstream weights through the statistics.
//! Training minimizes `J / B` so that `alpha = 1` reproduces the plain
//! mean-loss baseline bit for bit.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{forward, ArchSpec, Caches, Layer, LayerCache, Mode, Network, TrainConfig};
use crate::stats;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// How the per-layer ratio term aggregates over channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerVariant {
    /// One ratio per layer from the channel means of γ and σ (default).
    #[default]
    LayerMean,
    /// Sum of per-channel `log((γ_c/σ_c)²)` terms.
    ChannelSum,
}

/// Per-layer regularizer gradient with respect to the scale channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGradient {
    /// Position of the normalization layer in the network's layer list.
    pub layer_index: usize,
    /// `∂[(1−α)·reg] / ∂γ_c` per channel.
    pub per_channel: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// The composite objective on one batch.
///
/// Runs a training-mode forward pass on an internal copy (the caller's
/// network, including its running statistics, is untouched) and returns
/// `(J, (ce_sum, reg_sum))` with `J = alpha*ce_sum + (1-alpha)*reg_sum`
/// exactly. σ̄ comes from the batch statistics of this very pass.
pub fn regularized_loss(
    net: &Network,
    batch: &Tensor,
    labels: &[usize],
    alpha: f64,
    variant: RegularizerVariant,
) -> Result<(f64, (f64, f64))> {
    check_alpha(alpha)?;
    if !net.has_batch_norm() {
        return Err(Error::Model(
            "the ratio regularizer needs at least one normalization layer".into(),
        ));
    }
    let mut scratch = net.clone();
    scratch.set_mode(Mode::Train);
    let (_, _, caches) = forward(&mut scratch, batch, labels)?;
    let ce_sum: f64 = caches.sample_losses.iter().sum();
    let reg_sum = regularizer_value(&scratch, &caches, variant)?;
    Ok((alpha * ce_sum + (1.0 - alpha) * reg_sum, (ce_sum, reg_sum)))
}

/// `Σⱼ log((γ̄ⱼ/σ̄ⱼ)²)` from a forward pass's caches.
fn regularizer_value(net: &Network, caches: &Caches, variant: RegularizerVariant) -> Result<f64> {
    let mut reg = 0.0;
    for (layer, cache) in net.layers.iter().zip(&caches.layer_caches) {
        if let (Layer::BatchNorm(bn), LayerCache::BatchNorm(c)) = (layer, cache) {
            match variant {
                RegularizerVariant::LayerMean => {
                    let gamma_bar = stats::mean(&bn.gamma);
                    let sigma_bar = stats::mean(&c.sigma_eff);
                    if gamma_bar == 0.0 {
                        return Err(Error::Model(
                            "ratio regularizer undefined: mean scale is zero".into(),
                        ));
                    }
                    let r = gamma_bar / sigma_bar;
                    reg += (r * r).ln();
                }
                RegularizerVariant::ChannelSum => {
                    for (g, s) in bn.gamma.iter().zip(&c.sigma_eff) {
                        if *g == 0.0 {
                            return Err(Error::Model(
                                "ratio regularizer undefined: a scale channel is zero".into(),
                            ));
                        }
                        let r = g / s;
                        reg += (r * r).ln();
                    }
                }
            }
        }
    }
    Ok(reg)
}

/// Gradient of the penalty term `(1−α)·Σⱼ log((γ̄ⱼ/σ̄ⱼ)²)` with respect to
/// every scale channel.
///
/// σ is a constant of the step, so the gradient involves only γ: the
/// layer-mean variant contributes `(1−α)·2/(γ̄ⱼ·Cⱼ)` to each of the layer's
/// `Cⱼ` channels; the per-channel variant contributes `(1−α)·2/γ_c`.
pub fn regularizer_gradient(
    net: &Network,
    alpha: f64,
    variant: RegularizerVariant,
) -> Result<Vec<GammaGradient>> {
    check_alpha(alpha)?;
    let layers = net.batch_norm_layers();
    if layers.is_empty() {
        return Err(Error::Model(
            "the ratio regularizer needs at least one normalization layer".into(),
        ));
    }
    layers
        .into_iter()
        .map(|(layer_index, bn)| {
            let per_channel = match variant {
                RegularizerVariant::LayerMean => {
                    let gamma_bar = stats::mean(&bn.gamma);
                    if gamma_bar == 0.0 {
                        return Err(Error::Model(
                            "ratio regularizer undefined: mean scale is zero".into(),
                        ));
                    }
                    let g = (1.0 - alpha) * 2.0 / (gamma_bar * bn.channels() as f64);
                    vec![g; bn.channels()]
                }
                RegularizerVariant::ChannelSum => bn
                    .gamma
                    .iter()
                    .map(|&gc| {
                        if gc == 0.0 {
                            return Err(Error::Model(
                                "ratio regularizer undefined: a scale channel is zero".into(),
                            ));
                        }
                        Ok((1.0 - alpha) * 2.0 / gc)
                    })
                    .collect::<Result<Vec<f64>>>()?,
            };
            Ok(GammaGradient {
                layer_index,
                per_channel,
            })
        })
        .collect()
}

/// One row of an alpha sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Final-epoch accuracy on the corrupted subset (`NaN` if the dataset
    /// has no corrupted examples).
    pub corrupted_acc: f64,
    /// Final-epoch accuracy on the clean subset.
    pub clean_acc: f64,
    /// Median `γ/σ` over all normalization channels of the trained model.
    pub median_gamma_sigma: f64,
}

/// Train one model per `alpha` (same seed throughout, so rows differ only in
/// the objective) and report the memorization/generalization endpoints.
///
/// `jobs` caps the worker threads; results are merged by index, so the
/// output is independent of the parallelism degree.
pub fn alpha_sweep(
    dataset: &Dataset,
    arch: &ArchSpec,
    alphas: &[f64],
    config: &TrainConfig,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("alpha sweep needs at least one alpha".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    if !arch.batch_norm {
        return Err(Error::Model(
            "the ratio regularizer needs a normalization architecture".into(),
        ));
    }
    let jobs = jobs.max(1).min(alphas.len());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<SweepRow>>>> =
        alphas.iter().map(|_| std::sync::Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= alphas.len() {
                    break;
                }
                *slots[i].lock().expect("sweep slot") = Some(sweep_one(dataset, arch, alphas[i], config));
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("sweep slot").expect("every slot filled"))
        .collect()
}

fn sweep_one(dataset: &Dataset, arch: &ArchSpec, alpha: f64, config: &TrainConfig) -> Result<SweepRow> {
    let mut net = arch.build(config.seed)?;
    let mut cfg = config.clone();
    cfg.mitigation_alpha = Some(alpha);
    let traces = crate::nn::train(&mut net, dataset, &cfg)?;
    let last = traces.last().ok_or_else(|| Error::Model("training produced no epochs".into()))?;
    let ratios: Vec<f64> = net
        .batch_norm_layers()
        .into_iter()
        .flat_map(|(_, bn)| bn.scale_ratios())
        .collect();
    Ok(SweepRow {
        alpha,
        corrupted_acc: last.corrupted_acc.unwrap_or(f64::NAN),
        clean_acc: last.clean_acc,
        median_gamma_sigma: stats::median(&ratios),
    })
}

/// Render sweep rows as CSV (`alpha,corrupted_acc,clean_acc,median_gamma_sigma`).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,corrupted_acc,clean_acc,median_gamma_sigma\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.alpha, r.corrupted_acc, r.clean_acc, r.median_gamma_sigma
        ));
    }
    out
}
