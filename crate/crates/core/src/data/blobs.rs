//! Synthetic Gaussian-blob classification data.

use crate::error::{Error, Result};
use crate::prng::Rng;

use super::{Dataset, LabeledExample, Provenance};

/// Isotropic unit-variance Gaussian blobs, one per class, every pair of class
/// means exactly `separation` apart.
///
/// Class `c`'s mean is `separation / sqrt(2)` along coordinate axis `c` (so
/// `dim >= num_classes` is required); the pairwise distance between any two
/// means is then exactly `separation`, which makes "adjacent" separation
/// uniform across the label alphabet. Examples are emitted class-major
/// (class 0 first), unshuffled — training shuffles per epoch anyway.
pub fn synth_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(
            "synth_blobs needs at least 2 classes".into(),
        ));
    }
    if per_class == 0 {
        return Err(Error::InvalidArgument(
            "synth_blobs needs at least 1 example per class".into(),
        ));
    }
    if dim < num_classes {
        return Err(Error::InvalidArgument(format!(
            "synth_blobs needs dim >= num_classes ({dim} < {num_classes})"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }

    let offset = separation / std::f64::consts::SQRT_2;
    let mut rng = Rng::new(seed);
    let mut examples = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        for _ in 0..per_class {
            let mut features: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            features[class] += offset;
            examples.push(LabeledExample {
                features,
                label: class,
                provenance: Provenance::Clean,
            });
        }
    }
    Ok(Dataset {
        name: format!("blobs-c{num_classes}-n{per_class}-d{dim}"),
        num_classes,
        examples,
    })
}

/// Multiply every feature by `factor`, returning the scaled dataset.
///
/// Image pixels normalized to `[0, 1]` have per-coordinate standard
/// deviations well below one (about 0.3 for typical digit images), while
/// [`synth_blobs`] emits unit-variance coordinates. Scaling the synthetic
/// data down to that regime reproduces the activation scales a first layer
/// actually sees on image data, which matters because the normalization
/// layers' scale/deviation ratios depend on the input scale.
pub fn scale_features(dataset: &Dataset, factor: f64) -> Result<Dataset> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be finite and positive, got {factor}"
        )));
    }
    let mut scaled = dataset.clone();
    for e in &mut scaled.examples {
        for f in &mut e.features {
            *f *= factor;
        }
    }
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, population_variance};

    #[test]
    fn scaling_multiplies_every_feature_and_rejects_bad_factors() {
        let d = synth_blobs(2, 5, 3, 2.0, 7).unwrap();
        let s = scale_features(&d, 0.25).unwrap();
        for (a, b) in d.examples.iter().zip(&s.examples) {
            assert_eq!(a.label, b.label);
            for (x, y) in a.features.iter().zip(&b.features) {
                assert_eq!(*y, *x * 0.25);
            }
        }
        assert!(scale_features(&d, 0.0).is_err());
        assert!(scale_features(&d, -1.0).is_err());
        assert!(scale_features(&d, f64::NAN).is_err());
    }

    #[test]
    fn class_means_are_equidistant_at_separation() {
        let sep = 4.0;
        let d = synth_blobs(5, 400, 8, sep, 11).unwrap();
        // Empirical class means.
        let mut means = vec![vec![0.0; 8]; 5];
        for e in &d.examples {
            for (m, &f) in means[e.label].iter_mut().zip(&e.features) {
                *m += f;
            }
        }
        means
            .iter_mut()
            .for_each(|m| m.iter_mut().for_each(|v| *v /= 400.0));
        // Pairwise distances concentrate near `sep` (standard error of each
        // coordinate is 1/20, distance error ~ a few times that).
        for a in 0..5 {
            for b in (a + 1)..5 {
                let dist: f64 = means[a]
                    .iter()
                    .zip(&means[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                assert!(
                    (dist - sep).abs() < 0.3,
                    "classes {a},{b}: distance {dist} vs {sep}"
                );
            }
        }
    }

    #[test]
    fn coordinates_have_unit_variance() {
        let d = synth_blobs(3, 1000, 5, 6.0, 12).unwrap();
        for coord in 0..5 {
            for class in 0..3 {
                let vals: Vec<f64> = d
                    .examples
                    .iter()
                    .filter(|e| e.label == class)
                    .map(|e| e.features[coord])
                    .collect();
                let v = population_variance(&vals);
                assert!((v - 1.0).abs() < 0.15, "class {class} coord {coord} var {v}");
                if coord == class {
                    let m = mean(&vals);
                    assert!((m - 6.0 / std::f64::consts::SQRT_2).abs() < 0.15);
                }
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = synth_blobs(3, 10, 4, 2.0, 1).unwrap();
        let b = synth_blobs(3, 10, 4, 2.0, 1).unwrap();
        let c = synth_blobs(3, 10, 4, 2.0, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 30);
        assert!(a.validate().is_ok());
        assert!(a.examples.iter().all(|e| e.provenance.is_clean()));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(synth_blobs(1, 10, 4, 2.0, 1).is_err());
        assert!(synth_blobs(3, 0, 4, 2.0, 1).is_err());
        assert!(synth_blobs(5, 10, 4, 2.0, 1).is_err()); // dim < classes
        assert!(synth_blobs(3, 10, 4, -1.0, 1).is_err());
        assert!(synth_blobs(3, 10, 4, f64::NAN, 1).is_err());
    }
}
