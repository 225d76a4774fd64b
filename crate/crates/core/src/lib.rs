//! Multi-layer image-augmentation policy search by regularized gradient
//! matching.
//!
//! The library searches an augmentation pipeline from scratch: a policy is a
//! stack of categorical distributions over a fixed transform table, and each
//! layer is optimized to maximize the cosine similarity between the gradient
//! of augmented data and the gradient of a batch of original validation data,
//! penalized by the cross-image standard deviation of the per-transform
//! reward.
//!
//! Modules:
//! - [`imgops`]: the transform table (18 operations, 12 magnitude levels) and
//!   transform application.
//! - [`nnet`]: a small classifier with manual forward/backward producing the
//!   flattened weight gradients the matcher consumes.
//! - [`data`]: CIFAR-10 binary ingestion, synthetic nuisance-controlled
//!   datasets, and samplers.
//! - [`policy`]: stacked categorical policy layers, chain sampling, and
//!   policy (de)serialization.
//! - [`matcher`]: the gradient-matching core: per-transform rewards, the
//!   mean-minus-std regularizer, the softmax policy gradient, and Adam.
//! - [`search`]: progressive layer-by-layer search with identity-convergence
//!   stopping, traces, and distribution reports.
//! - [`selfcheck`]: the built-in oracle suites behind the `selfcheck` CLI
//!   command.

pub mod data;
pub mod error;
pub mod fsutil;
pub mod image;
pub mod imgops;
pub mod matcher;
pub mod nnet;
pub mod policy;
pub mod rng;
pub mod search;
pub mod selfcheck;

pub use error::{Error, Result};
pub use image::Image;
