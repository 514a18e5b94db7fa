//! Datamodels: linear surrogates that predict a trained model's output on a
//! fixed target example from the characteristic vector of its training
//! subset.
//!
//! The pipeline: [`sampling`] draws alpha-fraction training subsets,
//! [`trainers`] fits a model per subset and records per-target outputs,
//! [`estimators`] fits sparse linear datamodels from (mask, output) pairs,
//! and the [`counterfactuals`], [`influence`], [`embeddings`], and
//! [`simulation`] modules apply the fitted weights to dataset-ablation
//! prediction, data-support estimation, influence comparison, and embedding
//! analysis. [`io`] pins the binary interchange formats.

pub mod counterfactuals;
pub mod data;
pub mod embeddings;
pub mod error;
pub mod estimators;
pub mod influence;
pub mod io;
pub mod linalg;
pub mod parallel;
pub mod rng;
pub mod sampling;
pub mod simulation;
pub mod stats;
pub mod trainers;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use data::{Datamodel, MaskMatrix, OutputFn, OutputMatrix, SubsetMask, TargetSpec, TrainingSet};
pub use error::{Error, Result};
