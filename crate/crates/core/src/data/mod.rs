//! Datasets: ingestion, synthesis, controlled corruption, and persistence.
//!
//! Every example carries a [`Provenance`] tag, so downstream analyses
//! (influence histograms, attack reports, accuracy traces) can always split
//! results into clean versus deliberately corrupted populations without
//! re-deriving what was done to the data.

mod blobs;
mod cache;
mod corrupt;
mod idx;
mod shadows;

pub use blobs::{scale_features, synth_blobs};
pub use cache::{load_cache, provenance_csv, save_cache};
pub use corrupt::{flip_labels, inject_ood, reconcile_features, FlipRecord};
pub use idx::{load_idx, save_idx};
pub use shadows::split_for_shadows;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Where an example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Untouched original example.
    Clean,
    /// Label deliberately flipped away from `original`.
    FlippedLabel { original: usize },
    /// Foreign example injected from another dataset.
    InjectedOod { source: String },
}

impl Provenance {
    pub fn is_clean(&self) -> bool {
        matches!(self, Provenance::Clean)
    }
}

/// One example: dense features plus an integer label and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
    pub provenance: Provenance,
}

/// A named dataset with a fixed label alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Feature dimensionality (from the first example).
    pub fn feature_dim(&self) -> usize {
        self.examples.first().map_or(0, |e| e.features.len())
    }

    /// Structural validation: consistent dimensionality, labels within the
    /// alphabet, finite features.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset '{}' needs at least 2 classes, has {}",
                self.name, self.num_classes
            )));
        }
        let dim = self.feature_dim();
        for (i, e) in self.examples.iter().enumerate() {
            if e.features.len() != dim {
                return Err(Error::ShapeMismatch {
                    context: "Dataset::validate",
                    expected: format!("{dim} features"),
                    found: format!("{} features at example {i}", e.features.len()),
                });
            }
            if e.label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: e.label,
                    num_classes: self.num_classes,
                });
            }
            if !e.features.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("features of example {i}"),
                });
            }
        }
        Ok(())
    }

    /// Gather the selected examples' features into a `len x dim` tensor.
    pub fn features_of(&self, indices: &[usize]) -> Tensor {
        let dim = self.feature_dim();
        let mut out = Tensor::zeros(&[indices.len(), dim]);
        for (row, &idx) in indices.iter().enumerate() {
            out.row_mut(row).copy_from_slice(&self.examples[idx].features);
        }
        out
    }

    /// Labels of the selected examples.
    pub fn labels_of(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.examples[i].label).collect()
    }

    /// Indices of examples whose provenance is not [`Provenance::Clean`].
    pub fn corrupted_indices(&self) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.provenance.is_clean())
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of clean examples.
    pub fn clean_indices(&self) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.provenance.is_clean())
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset containing the selected examples (cloned, same order).
    pub fn subset(&self, indices: &[usize], name: &str) -> Dataset {
        Dataset {
            name: name.to_string(),
            num_classes: self.num_classes,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset {
            name: "tiny".into(),
            num_classes: 3,
            examples: vec![
                LabeledExample {
                    features: vec![0.0, 1.0],
                    label: 0,
                    provenance: Provenance::Clean,
                },
                LabeledExample {
                    features: vec![2.0, 3.0],
                    label: 2,
                    provenance: Provenance::FlippedLabel { original: 1 },
                },
            ],
        }
    }

    #[test]
    fn validate_catches_structural_problems() {
        assert!(tiny().validate().is_ok());

        let mut d = tiny();
        d.examples[1].features.push(9.0);
        assert!(d.validate().is_err());

        let mut d = tiny();
        d.examples[0].label = 3;
        assert!(matches!(
            d.validate(),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));

        let mut d = tiny();
        d.examples[0].features[0] = f64::NAN;
        assert!(matches!(d.validate(), Err(Error::NonFinite { .. })));

        let mut d = tiny();
        d.num_classes = 1;
        assert!(d.validate().is_err());
    }

    #[test]
    fn gather_and_provenance_splits() {
        let d = tiny();
        let t = d.features_of(&[1, 0]);
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.row(0), &[2.0, 3.0]);
        assert_eq!(d.labels_of(&[1, 0]), vec![2, 0]);
        assert_eq!(d.corrupted_indices(), vec![1]);
        assert_eq!(d.clean_indices(), vec![0]);
        let s = d.subset(&[1], "sub");
        assert_eq!(s.len(), 1);
        assert_eq!(s.examples[0].label, 2);
    }
}
