//! Learning algorithms and output functions: the black box the datamodels
//! approximate. Two desk-scale trainers ship: a deterministic minimum-norm
//! linear interpolator and a seeded-SGD multinomial logistic regression.

mod campaign;
mod logistic;
mod minnorm;
mod normality;

pub use campaign::{evaluate_campaign_rows, fill_exclusions, run_campaign_on_masks, run_training_campaign};
pub use logistic::LogisticHp;
pub use minnorm::{min_norm_multi, train_minnorm_linear};
pub use normality::{normality_screen, NormalityScreen};

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use crate::data::{OutputFn, SubsetMask, TargetSpec, TrainingSet};
use crate::error::{Error, Result};

/// A trained classifier exposing per-class logits. Evaluation is pure.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// num_classes x feature_dim
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Training subset contained fewer than two classes.
    pub degenerate: bool,
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&x) + &self.bias
    }
}

/// Correct-class margin: label logit minus the highest incorrect logit.
/// Ties at zero count as misclassification.
pub fn margin_from_logits(logits: ArrayView1<f64>, label: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Degenerate(
            "margin undefined for a single-class model".into(),
        ));
    }
    let correct = logits[label];
    let best_other = logits
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(correct - best_other)
}

fn softmax_confidence(logits: ArrayView1<f64>, label: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let denom: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    ((logits[label] - max).exp() / denom).max(f64::MIN_POSITIVE)
}

/// Scalar output of a trained model on one target under `f`.
pub fn evaluate_output(logits: ArrayView1<f64>, label: usize, f: OutputFn) -> Result<f64> {
    Ok(match f {
        OutputFn::Margin => margin_from_logits(logits, label)?,
        OutputFn::Correctness => {
            if margin_from_logits(logits, label)? > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        OutputFn::Confidence => softmax_confidence(logits, label),
        OutputFn::Xent => -softmax_confidence(logits, label).ln(),
    })
}

/// Evaluates a model on a target list.
pub fn evaluate_outputs(model: &TrainedModel, targets: &[TargetSpec], f: OutputFn) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|t| {
            if t.features.len() != model.weights.ncols() {
                return Err(Error::Shape(format!(
                    "target feature dim {} vs model {}",
                    t.features.len(),
                    model.weights.ncols()
                )));
            }
            evaluate_output(model.logits(t.features.view()).view(), t.label, f)
        })
        .collect()
}

/// A pluggable learning algorithm.
#[derive(Debug, Clone)]
pub enum Trainer {
    /// One-vs-all minimum-norm least squares on +/-1 class targets;
    /// deterministic.
    MinNorm,
    /// Multinomial logistic regression by seeded minibatch SGD; stochastic
    /// through initialization and batch order only.
    Logistic(LogisticHp),
}

impl Trainer {
    pub fn id(&self) -> String {
        match self {
            Trainer::MinNorm => "minnorm".into(),
            Trainer::Logistic(hp) => format!(
                "logistic(epochs={},lr={},batch={},init={})",
                hp.epochs, hp.lr, hp.batch, hp.init_scale
            ),
        }
    }

    pub fn deterministic(&self) -> bool {
        matches!(self, Trainer::MinNorm)
    }

    /// Builds a trainer from a config id plus hyperparameter map.
    pub fn from_config(id: &str, hp: &BTreeMap<String, f64>) -> Result<Self> {
        match id {
            "minnorm" => Ok(Trainer::MinNorm),
            "logistic" => Ok(Trainer::Logistic(LogisticHp::from_map(hp))),
            other => Err(Error::InvalidParam(format!("unknown trainer id {other:?}"))),
        }
    }

    /// Trains on the subset rows of `data`. Reproducible given
    /// (subset, seed, hyperparameters).
    pub fn train(&self, data: &TrainingSet, subset: &SubsetMask, seed: u64) -> Result<TrainedModel> {
        self.train_relabeled(data, subset, &[], seed)
    }

    /// As [`Trainer::train`] but with labels of selected examples overridden
    /// (mislabeling counterfactuals).
    pub fn train_relabeled(
        &self,
        data: &TrainingSet,
        subset: &SubsetMask,
        relabel: &[(usize, usize)],
        seed: u64,
    ) -> Result<TrainedModel> {
        if subset.d() != data.len() {
            return Err(Error::Shape(format!(
                "mask width {} vs training set size {}",
                subset.d(),
                data.len()
            )));
        }
        if subset.cardinality() == 0 {
            return Err(Error::Degenerate("empty training subset".into()));
        }
        let idx = subset.indices();
        let mut labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        for &(example, new_label) in relabel {
            if new_label >= data.num_classes {
                return Err(Error::InvalidParam(format!(
                    "relabel class {new_label} out of range {}",
                    data.num_classes
                )));
            }
            if let Ok(pos) = idx.binary_search(&example) {
                labels[pos] = new_label;
            }
        }
        match self {
            Trainer::MinNorm => minnorm::train_classifier(data, &idx, &labels),
            Trainer::Logistic(hp) => logistic::train(data, &idx, &labels, hp, seed),
        }
    }
}

/// Anything that can produce per-target outputs for a training subset:
/// trainer-backed evaluation, the simulation's closed-form kernel, or a
/// planted test oracle. Counterfactual evaluation and support estimation
/// are written against this interface.
pub trait SubsetOracle: Sync {
    fn n_targets(&self) -> usize;
    fn d(&self) -> usize;

    /// Outputs for all targets after training on `subset`. `trial_seed`
    /// keys training stochasticity; deterministic oracles ignore it.
    fn outputs(&self, subset: &SubsetMask, trial_seed: u64) -> Result<Vec<f64>>;

    /// As [`SubsetOracle::outputs`] with label overrides; oracles without a
    /// label notion reject this.
    fn outputs_relabeled(
        &self,
        subset: &SubsetMask,
        relabel: &[(usize, usize)],
        trial_seed: u64,
    ) -> Result<Vec<f64>>;
}

/// Trainer-backed oracle over a fixed target list.
pub struct TrainerOracle<'a> {
    pub data: &'a TrainingSet,
    pub trainer: &'a Trainer,
    pub output_fn: OutputFn,
    pub targets: &'a [TargetSpec],
}

impl SubsetOracle for TrainerOracle<'_> {
    fn n_targets(&self) -> usize {
        self.targets.len()
    }

    fn d(&self) -> usize {
        self.data.len()
    }

    fn outputs(&self, subset: &SubsetMask, trial_seed: u64) -> Result<Vec<f64>> {
        let model = self.trainer.train(self.data, subset, trial_seed)?;
        evaluate_outputs(&model, self.targets, self.output_fn)
    }

    fn outputs_relabeled(
        &self,
        subset: &SubsetMask,
        relabel: &[(usize, usize)],
        trial_seed: u64,
    ) -> Result<Vec<f64>> {
        let model = self.trainer.train_relabeled(self.data, subset, relabel, trial_seed)?;
        evaluate_outputs(&model, self.targets, self.output_fn)
    }
}
