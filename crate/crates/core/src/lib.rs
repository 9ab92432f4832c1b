//! Training-free few-shot classification on frozen backbone embeddings.
//!
//! Pipeline: pool tokens into one vector per image, project with a PCA or ICA
//! map fitted on unlabeled training embeddings, build per-class concept models
//! from the support set and label queries by Mahalanobis k-nearest-neighbour
//! vote. Around it sit the episodic sampler, the evaluation harness, the
//! layer-wise characterization protocol and a logistic curve fitter.

pub mod concept;
pub mod curvefit;
pub mod embedding;
pub mod episodes;
pub mod error;
pub mod harness;
pub mod reduction;
pub mod report;
pub mod rng;
pub mod synth;

pub use error::{Error, FormatError, Result};
