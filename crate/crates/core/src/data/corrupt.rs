//! Controlled corruption: label flips and out-of-distribution injection.

use crate::error::{Error, Result};
use crate::prng::Rng;

use super::{Dataset, LabeledExample, Provenance};

/// One flipped example, for the corruption manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FlipRecord {
    pub index: usize,
    pub original: usize,
    pub new_label: usize,
}

/// Flip the labels of `floor(len * ratio)` examples chosen uniformly without
/// replacement; each flipped label is drawn uniformly from the other classes.
///
/// Non-clean examples are eligible like any others (a second corruption pass
/// overwrites provenance); flipped indices are processed in ascending order
/// so the random stream consumed per index is reproducible. Returns the
/// corrupted dataset and a manifest of what changed.
pub fn flip_labels(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Vec<FlipRecord>)> {
    if !(0.0..=1.0).contains(&ratio) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "flip ratio must be in [0, 1], got {ratio}"
        )));
    }
    dataset.validate()?;
    let n = dataset.len();
    let delta = ((n as f64) * ratio).floor() as usize;

    let mut rng = Rng::new(seed);
    let mut chosen = rng.sample_indices(n, delta);
    chosen.sort_unstable();

    let mut out = dataset.clone();
    let mut manifest = Vec::with_capacity(delta);
    for &idx in &chosen {
        let example = &mut out.examples[idx];
        let original = example.label;
        // Uniform over the other num_classes - 1 labels.
        let draw = rng.below(dataset.num_classes - 1);
        let new_label = if draw >= original { draw + 1 } else { draw };
        example.label = new_label;
        example.provenance = Provenance::FlippedLabel { original };
        manifest.push(FlipRecord {
            index: idx,
            original,
            new_label,
        });
    }
    Ok((out, manifest))
}

/// Inject `count` examples drawn (with replacement) from `source`, all
/// assigned one shared random label from the target's alphabet, appended at
/// the end of the dataset.
///
/// Feature dimensions are reconciled with [`reconcile_features`].
pub fn inject_ood(dataset: &Dataset, source: &Dataset, count: usize, seed: u64) -> Result<Dataset> {
    dataset.validate()?;
    source.validate()?;
    if source.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot inject from an empty source dataset".into(),
        ));
    }

    let mut rng = Rng::new(seed);
    // One label shared by every injected sample: the point of the injection
    // is a coherent group of samples that are outliers in feature space but
    // agree with each other on the label.
    let shared_label = rng.below(dataset.num_classes);

    let dst_dim = dataset.feature_dim();
    let mut out = dataset.clone();
    for _ in 0..count {
        let src_idx = rng.below(source.len());
        let features =
            reconcile_features(&source.examples[src_idx].features, dst_dim)?;
        out.examples.push(LabeledExample {
            features,
            label: shared_label,
            provenance: Provenance::InjectedOod {
                source: source.name.clone(),
            },
        });
    }
    Ok(out)
}

/// Map foreign features onto `dst_dim` dimensions.
///
/// Rules, in order:
/// 1. matching length — returned unchanged;
/// 2. planar RGB (`3 * s * s` for square `s`) — channel-averaged to
///    grayscale `s * s`;
/// 3. square-to-square (`s * s` to `d * d`) — nearest-neighbor resample.
///
/// Anything else is an error: silently guessing at a layout would corrupt the
/// experiment rather than the dataset.
pub fn reconcile_features(features: &[f64], dst_dim: usize) -> Result<Vec<f64>> {
    if features.len() == dst_dim {
        return Ok(features.to_vec());
    }

    let side = int_sqrt(features.len());
    if side.is_none() && features.len() % 3 == 0 {
        if let Some(s) = int_sqrt(features.len() / 3) {
            // Planar RGB: three s*s planes.
            let plane = s * s;
            let mut gray = Vec::with_capacity(plane);
            for p in 0..plane {
                gray.push((features[p] + features[plane + p] + features[2 * plane + p]) / 3.0);
            }
            if gray.len() == dst_dim {
                return Ok(gray);
            }
            return resize_nearest(&gray, s, dst_dim);
        }
    }

    match side {
        Some(s) => resize_nearest(features, s, dst_dim),
        None => Err(Error::InvalidArgument(format!(
            "cannot reconcile {} features to {dst_dim}: not a square or planar-RGB-square layout",
            features.len()
        ))),
    }
}

fn int_sqrt(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

fn resize_nearest(src: &[f64], src_side: usize, dst_dim: usize) -> Result<Vec<f64>> {
    let dst_side = int_sqrt(dst_dim).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "cannot resize to non-square target dimension {dst_dim}"
        ))
    })?;
    let mut out = Vec::with_capacity(dst_dim);
    for r in 0..dst_side {
        let sr = r * src_side / dst_side;
        for c in 0..dst_side {
            let sc = c * src_side / dst_side;
            out.push(src[sr * src_side + sc]);
        }
    }
    Ok(out)
}
