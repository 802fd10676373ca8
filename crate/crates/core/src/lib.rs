//! Fairness-aware contrastive regularization with prototype-derived
//! pseudo-counterfactual pairs.
//!
//! Samples that land in the same prototype cluster but carry different
//! sensitive attributes are treated as positives in an auxiliary contrastive
//! loss that is added to an unchanged base objective (SimCLR or SupCon).
//! Cluster assignments come from a separate projection head and are fed to
//! the loss as detached integers, so the clustering is never optimized by
//! the fairness term itself.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffcore`]: dense matrices and a reverse-mode graph
//! - [`models`]: the encoder and its two projection heads
//! - [`prototypes`]: spherical K-Means prototypes with EMA tracking
//! - [`queue`]: FIFO bank of detached embeddings from recent batches
//! - [`losses`]: base objectives and the fairness regularizer
//! - [`data`]: synthetic biased data, augmentation and CSV ingestion
//! - [`eval`]: linear probe, accuracy and equalized odds
//! - [`optim`] / [`trainer`]: SGD with cosine schedule and the training loop

pub mod checkpoint;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod optim;
pub mod prototypes;
pub mod queue;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
