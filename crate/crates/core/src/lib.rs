//! Desk-scale toolkit for studying how batch normalization amplifies the
//! memorization of outlier training samples.
//!
//! The crate has three tiers:
//!
//! * **Engine** ([`nn`], [`tensor`], [`prng`]) — a from-scratch, deterministic
//!   feed-forward network with batch normalization, exact manual gradients
//!   (full batch-statistics backward and a frozen-statistics per-sample
//!   variant), SGD/Adam training, and byte-stable model persistence.
//! * **Theory** ([`theory`]) — the closed-form single-channel model of how a
//!   normalization layer rescales the effective slope seen by an outlier:
//!   margin recursions, scale-parameter dynamics, memorization-time laws, and
//!   numerical verification oracles.
//! * **Experiments** ([`data`], [`influence`], [`mia`], [`mitigation`]) —
//!   dataset synthesis and controlled corruption, per-sample gradient-norm
//!   influence analysis, a shadow-model membership-inference harness, and a
//!   scale-ratio regularizer with its trade-off sweep.
//!
//! Everything is driven by a single master seed (see [`prng::derive_seed`]),
//! and every artifact the toolkit writes (models, dataset caches, CSV traces,
//! JSON reports) is byte-stable across reruns.

pub mod check;
pub mod data;
pub mod error;
pub mod influence;
pub mod mia;
pub mod mitigation;
pub mod nn;
pub mod prng;
pub mod stats;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
