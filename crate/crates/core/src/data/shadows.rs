//! Random in/out splits for shadow-model training.

use crate::error::{Error, Result};
use crate::prng::{derive_seed, Rng};

use super::Dataset;

/// Assign each example to be IN or OUT of each of `num_models` shadow models.
///
/// Every (model, example) pair gets an independent fair coin, so each example
/// is expected to be a member of about half the models — the property the
/// per-example in/out score distributions rely on. Returns one membership
/// mask per model.
pub fn split_for_shadows(
    dataset: &Dataset,
    num_models: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    if num_models < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 shadow models to form in/out populations, got {num_models}"
        )));
    }
    let n = dataset.len();
    let mut masks = Vec::with_capacity(num_models);
    for model in 0..num_models {
        let mut rng = Rng::new(derive_seed(seed, "shadow-split", model as u64));
        masks.push((0..n).map(|_| rng.coin()).collect());
    }
    Ok(masks)
}
