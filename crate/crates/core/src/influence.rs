//! Per-sample gradient-norm influence analysis and layerwise scale ratios.
//!
//! The influence of a training example is the ℓ2 norm of the gradient of its
//! own loss with respect to the model parameters, computed under the frozen
//! normalization-statistics convention of
//! [`per_sample_sq_grad_norms`](crate::nn::per_sample_sq_grad_norms): in
//! training mode each example's statistics are those of its containing batch
//! (assigned from a seed, so runs are reproducible), in evaluation mode the
//! running estimates. Records keep their provenance tag so distributions can
//! be split into clean and corrupted populations.

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::{forward, per_sample_sq_grad_norms, GradScope, Mode, Network};
use crate::prng::{derive_seed, Rng};
use crate::stats;

/// Influence of one training example: `‖∇_θ ℓ(x_i, y_i)‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRecord {
    pub example_index: usize,
    /// ℓ2 gradient norm; `NaN` when the computation was not finite (see
    /// [`InfluenceRecord::finite`]).
    pub grad_norm: f64,
    pub provenance: Provenance,
    /// `false` flags a record whose gradient came out non-finite; such
    /// records are excluded from summaries but kept in the output so the
    /// example list stays complete.
    pub finite: bool,
}

/// Per-sample gradient norms for every example in the dataset.
///
/// Examples are assigned to batches of `batch_size` in an order drawn from
/// `seed`, so the assignment — which matters for batch-statistics
/// normalization in training mode — is reproducible. The network itself is
/// never mutated; training-mode passes run on an internal copy so running
/// statistics keep their trained values. Records are returned sorted by
/// `example_index`, one per example, independent of the batch layout order.
///
/// A batch whose forward loss is non-finite, or an example whose norm is
/// non-finite, is flagged rather than failing the run.
pub fn compute_influence(
    net: &Network,
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    scope: GradScope,
) -> Result<Vec<InfluenceRecord>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "influence computation needs at least one example".into(),
        ));
    }
    dataset.validate()?;
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if dataset.feature_dim() != net.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "compute_influence",
            expected: format!("{} features", net.input_dim()),
            found: format!("{}", dataset.feature_dim()),
        });
    }
    if dataset.num_classes > net.num_classes() {
        return Err(Error::Model(format!(
            "network outputs {} classes, dataset has {}",
            net.num_classes(),
            dataset.num_classes
        )));
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = Rng::new(derive_seed(seed, "influence-batches", 0));
    rng.shuffle(&mut order);

    let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
    // Batch statistics need at least two examples; fold a trailing singleton
    // into the previous batch, mirroring the training loop.
    if net.has_batch_norm() && net.mode == Mode::Train {
        if let [.., last] = batches.as_slice() {
            if last.len() == 1 {
                if batches.len() == 1 {
                    return Err(Error::BatchTooSmall { size: 1 });
                }
                batches.pop();
                let merged = batches.len() - 1;
                let start = merged * batch_size;
                batches[merged] = &order[start..];
            }
        }
    }

    let mut scratch = net.clone();
    let mut records: Vec<Option<InfluenceRecord>> = vec![None; dataset.len()];
    for batch in batches {
        let features = dataset.features_of(batch);
        let labels = dataset.labels_of(batch);
        let norms: Vec<f64> = match forward(&mut scratch, &features, &labels) {
            Ok((_, _, caches)) => per_sample_sq_grad_norms(&scratch, &caches, scope)?
                .into_iter()
                .map(|sq| sq.sqrt())
                .collect(),
            Err(Error::NonFinite { .. }) => vec![f64::NAN; batch.len()],
            Err(e) => return Err(e),
        };
        for (&idx, norm) in batch.iter().zip(norms) {
            records[idx] = Some(InfluenceRecord {
                example_index: idx,
                grad_norm: norm,
                provenance: dataset.examples[idx].provenance.clone(),
                finite: norm.is_finite(),
            });
        }
    }
    Ok(records
        .into_iter()
        .map(|r| r.expect("every example was assigned to a batch"))
        .collect())
}

/// Descriptive statistics of one provenance group's gradient norms.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    /// Counts per histogram bin (shared edges across groups).
    pub histogram: Vec<usize>,
}

/// Grouped distribution summary with shared log-spaced histogram bins.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DistributionSummary {
    /// 65 edges bounding 64 log-spaced bins over `[1e-8, max]`.
    pub edges: Vec<f64>,
    pub groups: Vec<GroupSummary>,
}

const HISTOGRAM_BINS: usize = 64;
const HISTOGRAM_FLOOR: f64 = 1e-8;

fn provenance_group(p: &Provenance) -> &'static str {
    match p {
        Provenance::Clean => "clean",
        Provenance::FlippedLabel { .. } => "flipped_label",
        Provenance::InjectedOod { .. } => "injected_ood",
    }
}

/// Summarize gradient-norm distributions, optionally split by provenance.
///
/// All groups share one set of 64 log-spaced bin edges spanning
/// `[1e-8, max]`, so group histograms are directly comparable. Flagged
/// (non-finite) records are skipped.
pub fn summarize_distribution(
    records: &[InfluenceRecord],
    group_by_provenance: bool,
) -> Result<DistributionSummary> {
    let finite: Vec<&InfluenceRecord> = records.iter().filter(|r| r.finite).collect();
    if finite.is_empty() {
        return Err(Error::InvalidArgument(
            "no finite influence records to summarize".into(),
        ));
    }
    let max = finite.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    let hi = if max > HISTOGRAM_FLOOR { max } else { HISTOGRAM_FLOOR * 2.0 };
    let edges = stats::log_edges(HISTOGRAM_FLOOR, hi, HISTOGRAM_BINS);

    let group_names: Vec<&'static str> = if group_by_provenance {
        let mut names = Vec::new();
        for r in &finite {
            let g = provenance_group(&r.provenance);
            if !names.contains(&g) {
                names.push(g);
            }
        }
        names
    } else {
        vec!["all"]
    };

    let groups = group_names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> = finite
                .iter()
                .filter(|r| !group_by_provenance || provenance_group(&r.provenance) == name)
                .map(|r| r.grad_norm)
                .collect();
            GroupSummary {
                group: name.to_string(),
                count: values.len(),
                mean: stats::mean(&values),
                median: stats::median(&values),
                p90: stats::quantile(&values, 0.9),
                histogram: stats::histogram(&values, &edges),
            }
        })
        .collect();
    Ok(DistributionSummary { edges, groups })
}

/// Per-channel scale-to-spread ratios of one normalization layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RatioProfile {
    /// Position of the layer in the network's layer list.
    pub layer_index: usize,
    /// `gamma_c / sqrt(running_var_c + eps)` per channel.
    pub ratios: Vec<f64>,
    pub median: f64,
    /// (first quartile, third quartile).
    pub quartiles: (f64, f64),
}

/// Extract `gamma / sqrt(running_var + eps)` profiles for every
/// normalization layer, in layer order. Networks without normalization
/// layers yield an empty list.
pub fn extract_gamma_sigma(net: &Network) -> Vec<RatioProfile> {
    net.batch_norm_layers()
        .into_iter()
        .map(|(layer_index, bn)| {
            let ratios = bn.scale_ratios();
            RatioProfile {
                layer_index,
                median: stats::median(&ratios),
                quartiles: (stats::quantile(&ratios, 0.25), stats::quantile(&ratios, 0.75)),
                ratios,
            }
        })
        .collect()
}

/// Render influence records as CSV (`example_index,provenance,grad_norm`).
/// Flagged records print `nan` for the norm.
pub fn influence_csv(records: &[InfluenceRecord]) -> String {
    let mut out = String::from("example_index,provenance,grad_norm\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.example_index,
            provenance_group(&r.provenance),
            if r.finite { r.grad_norm } else { f64::NAN }
        ));
    }
    out
}

/// Render per-channel ratio profiles as CSV
/// (`layer_index,channel,gamma,sigma,ratio`).
pub fn ratio_csv(net: &Network) -> String {
    let mut out = String::from("layer_index,channel,gamma,sigma,ratio\n");
    for (layer_index, bn) in net.batch_norm_layers() {
        for (c, ratio) in bn.scale_ratios().into_iter().enumerate() {
            let sigma = (bn.running_var[c] + bn.eps).sqrt();
            out.push_str(&format!(
                "{layer_index},{c},{},{sigma},{ratio}\n",
                bn.gamma[c]
            ));
        }
    }
    out
}
