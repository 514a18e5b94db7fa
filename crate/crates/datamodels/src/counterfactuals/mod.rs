//! Data counterfactuals: predict the effect of removing or mislabeling
//! training groups from datamodel weights, measure the true effect by
//! retraining, and estimate per-target data support by guided search over
//! top-weight removal sets.

mod isotonic;

pub use isotonic::pava_non_increasing;

use crate::data::{Datamodel, SubsetMask, TrainingSet};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::{derive_seed, row_rng};
use crate::sampling::remove_and_subsample;
use crate::stats::{mean, variance};
use crate::trainers::SubsetOracle;

/// How a counterfactual modifies the training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CfMode {
    /// Train on S minus the removed set; compare against the full-set control.
    Remove,
    /// Keep the removed set but flip its labels to the given class.
    Mislabel(usize),
    /// Remove, then subsample the remainder i.i.d. with this alpha; compare
    /// against an alpha-subsampled control.
    RandomControl(f64),
}

impl CfMode {
    pub fn name(&self) -> String {
        match self {
            CfMode::Remove => "remove".into(),
            CfMode::Mislabel(c) => format!("mislabel({c})"),
            CfMode::RandomControl(a) => format!("random_control({a})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CounterfactualSpec {
    /// Index into the oracle's target list.
    pub target_id: usize,
    pub removed: Vec<usize>,
    pub mode: CfMode,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct CounterfactualRecord {
    pub target_id: usize,
    pub mode: String,
    pub k: usize,
    pub predicted: f64,
    pub actual: f64,
    pub se: f64,
    pub trials: usize,
}

/// Cached control means E[f(x; control set)] per target.
#[derive(Debug, Clone)]
pub struct ControlCache {
    pub means: Vec<f64>,
    pub se: Vec<f64>,
    pub trials: usize,
    /// None: full training set; Some(alpha): random alpha-subsample control.
    pub alpha: Option<f64>,
}

/// Estimates control means by averaging `trials` trainings on the control
/// set (the full set, or alpha-subsamples for the random-control regime).
pub fn estimate_control(
    oracle: &dyn SubsetOracle,
    alpha: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<ControlCache> {
    if trials == 0 {
        return Err(Error::InvalidParam("control estimation needs trials >= 1".into()));
    }
    let d = oracle.d();
    let full: Vec<usize> = (0..d).collect();
    let per_trial = parallel::map_indexed(trials, |t| {
        let subset = match alpha {
            None => SubsetMask::from_indices(&full, d)?,
            Some(a) => remove_and_subsample(d, &[], a, derive_seed(seed, "control"), t as u64)?,
        };
        oracle.outputs(&subset, derive_seed(seed, "control-trial").wrapping_add(t as u64))
    });
    let mut rows = Vec::with_capacity(trials);
    for r in per_trial {
        rows.push(r?);
    }
    let n = oracle.n_targets();
    let mut means = vec![0.0; n];
    let mut ses = vec![0.0; n];
    for j in 0..n {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        means[j] = mean(&col);
        ses[j] = if trials > 1 { (variance(&col) / trials as f64).sqrt() } else { 0.0 };
    }
    Ok(ControlCache { means, se: ses, trials, alpha })
}

/// Datamodel-predicted margin drop from removing `removed`: the sum of the
/// removed coordinates of theta (the bias cancels in the difference).
pub fn predict_effect(dm: &Datamodel, removed: &[usize]) -> f64 {
    removed.iter().map(|&j| dm.theta[j]).sum()
}

/// Evaluates one counterfactual spec for several targets at once (the
/// retrained models are shared across targets).
pub fn eval_effect_group(
    oracle: &dyn SubsetOracle,
    removed: &[usize],
    mode: CfMode,
    targets: &[usize],
    trials: usize,
    control: &ControlCache,
    models: &[Datamodel],
    seed: u64,
) -> Result<Vec<CounterfactualRecord>> {
    if trials == 0 {
        return Err(Error::InvalidParam("need at least one trial".into()));
    }
    if let (Some(ca), CfMode::RandomControl(a)) = (control.alpha, mode) {
        if (ca - a).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "control cached at alpha {ca} but spec uses alpha {a}"
            )));
        }
    }
    let d = oracle.d();
    let mut is_removed = vec![false; d];
    for &r in removed {
        if r >= d {
            return Err(Error::InvalidParam(format!("removed index {r} out of range {d}")));
        }
        is_removed[r] = true;
    }
    let trial_rows = parallel::map_indexed(trials, |t| {
        let trial_seed = derive_seed(seed, "cf-trial").wrapping_add(t as u64);
        match mode {
            CfMode::Remove => {
                let keep: Vec<usize> = (0..d).filter(|&j| !is_removed[j]).collect();
                if keep.is_empty() {
                    return Err(Error::Degenerate("removal empties the training set".into()));
                }
                let subset = SubsetMask::from_indices(&keep, d)?;
                oracle.outputs(&subset, trial_seed)
            }
            CfMode::Mislabel(class) => {
                let full: Vec<usize> = (0..d).collect();
                let subset = SubsetMask::from_indices(&full, d)?;
                let relabel: Vec<(usize, usize)> = removed.iter().map(|&j| (j, class)).collect();
                oracle.outputs_relabeled(&subset, &relabel, trial_seed)
            }
            CfMode::RandomControl(a) => {
                let subset = remove_and_subsample(d, removed, a, derive_seed(seed, "cf-sub"), t as u64)?;
                oracle.outputs(&subset, trial_seed)
            }
        }
    });
    let mut rows = Vec::with_capacity(trials);
    for r in trial_rows {
        rows.push(r?);
    }
    targets
        .iter()
        .map(|&j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let post = mean(&col);
            let se_post = if trials > 1 { (variance(&col) / trials as f64).sqrt() } else { 0.0 };
            // control uncertainty and trial uncertainty add in quadrature
            let se = (se_post * se_post + control.se[j] * control.se[j]).sqrt();
            let dm = models
                .get(j)
                .ok_or_else(|| Error::Shape(format!("no datamodel for target {j}")))?;
            Ok(CounterfactualRecord {
                target_id: j,
                mode: mode.name(),
                k: removed.len(),
                predicted: predict_effect(dm, removed),
                actual: control.means[j] - post,
                se,
                trials,
            })
        })
        .collect()
}

/// Evaluates one spec for its single target.
pub fn eval_effect(
    spec: &CounterfactualSpec,
    oracle: &dyn SubsetOracle,
    control: &ControlCache,
    models: &[Datamodel],
    seed: u64,
) -> Result<CounterfactualRecord> {
    let mut v = eval_effect_group(
        oracle,
        &spec.removed,
        spec.mode,
        &[spec.target_id],
        spec.trials,
        control,
        models,
        seed,
    )?;
    Ok(v.pop().unwrap())
}

/// Indices of the k largest theta coordinates, ties broken by lower index.
pub fn top_k_indices(dm: &Datamodel, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dm.d()).collect();
    order.sort_by(|&a, &b| {
        dm.theta[b].partial_cmp(&dm.theta[a]).unwrap().then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Indices of the k most negative theta coordinates, ties by lower index.
pub fn bottom_k_indices(dm: &Datamodel, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dm.d()).collect();
    order.sort_by(|&a, &b| {
        dm.theta[a].partial_cmp(&dm.theta[b]).unwrap().then(a.cmp(&b))
    });
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Whether the guided search removes or mislabels the candidate sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportMode {
    Remove,
    Mislabel(usize),
}

#[derive(Debug, Clone)]
pub struct SupportEstimate {
    pub target_id: usize,
    /// Interpolated zero crossing of the isotonic-fitted margin curve;
    /// None when the curve never crosses within the grid (unbounded).
    pub k_hat: Option<f64>,
    /// ceil(1.2 * k_hat); None when unbounded.
    pub k_reported: Option<usize>,
    /// Retraining on S minus the reported set produced mean margin <= 0.
    pub certified: bool,
    /// (k, mean margin after modifying G_k), including k=0 as the control.
    pub curve: Vec<(usize, f64)>,
    pub control_margin: f64,
}

/// Guided data-support search (per-target): walk a k-grid of top-weight
/// candidate sets, measure mean margins over `trials` retrainings, fit a
/// non-increasing curve by pool-adjacent-violators, interpolate the zero
/// crossing, pad by 20%, and certify by retraining on the padded set.
#[allow(clippy::too_many_arguments)]
pub fn estimate_support(
    dm: &Datamodel,
    oracle: &dyn SubsetOracle,
    target: usize,
    control_margin: f64,
    k_grid: &[usize],
    trials: usize,
    mode: SupportMode,
    seed: u64,
) -> Result<SupportEstimate> {
    if k_grid.is_empty() || k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam("k grid must be nonempty and strictly increasing".into()));
    }
    if control_margin <= 0.0 {
        // already misclassified on average: empty support
        return Ok(SupportEstimate {
            target_id: target,
            k_hat: Some(0.0),
            k_reported: Some(0),
            certified: true,
            curve: vec![(0, control_margin)],
            control_margin,
        });
    }
    let mean_margin_at = |k: usize, salt: u64| -> Result<f64> {
        let g = top_k_indices(dm, k);
        let trial_vals = parallel::map_indexed(trials, |t| {
            let trial_seed = derive_seed(seed, "support").wrapping_add(salt * 65_536 + t as u64);
            let d = oracle.d();
            match mode {
                SupportMode::Remove => {
                    let keep: Vec<usize> = (0..d).filter(|j| !g.contains(j)).collect();
                    if keep.is_empty() {
                        return Err(Error::Degenerate("support grid exhausts the training set".into()));
                    }
                    let subset = SubsetMask::from_indices(&keep, d)?;
                    Ok(oracle.outputs(&subset, trial_seed)?[target])
                }
                SupportMode::Mislabel(class) => {
                    let full: Vec<usize> = (0..d).collect();
                    let subset = SubsetMask::from_indices(&full, d)?;
                    let relabel: Vec<(usize, usize)> = g.iter().map(|&j| (j, class)).collect();
                    Ok(oracle.outputs_relabeled(&subset, &relabel, trial_seed)?[target])
                }
            }
        });
        let vals: Result<Vec<f64>> = trial_vals.into_iter().collect();
        Ok(mean(&vals?))
    };

    let mut curve = vec![(0usize, control_margin)];
    for (gi, &k) in k_grid.iter().enumerate() {
        curve.push((k, mean_margin_at(k, gi as u64 + 1)?));
    }
    let fitted = pava_non_increasing(&curve.iter().map(|&(_, v)| v).collect::<Vec<_>>());
    let k_hat = zero_crossing(&curve.iter().map(|&(k, _)| k as f64).collect::<Vec<_>>(), &fitted);
    match k_hat {
        None => Ok(SupportEstimate {
            target_id: target,
            k_hat: None,
            k_reported: None,
            certified: false,
            curve,
            control_margin,
        }),
        Some(kh) => {
            let k_rep = (1.2 * kh).ceil() as usize;
            let k_rep = k_rep.min(dm.d());
            let verify = mean_margin_at(k_rep, 0xC0DE)?;
            Ok(SupportEstimate {
                target_id: target,
                k_hat: Some(kh),
                k_reported: Some(k_rep),
                certified: verify <= 0.0,
                curve,
                control_margin,
            })
        }
    }
}

/// First zero crossing of a non-increasing piecewise-linear curve; on a flat
/// interval at zero, the smallest k of the interval. None when the curve
/// stays positive.
fn zero_crossing(ks: &[f64], ys: &[f64]) -> Option<f64> {
    for i in 0..ys.len() {
        if ys[i] <= 0.0 {
            if i == 0 {
                return Some(ks[0]);
            }
            if ys[i] == 0.0 {
                return Some(ks[i]);
            }
            let (k0, y0) = (ks[i - 1], ys[i - 1]);
            let (k1, y1) = (ks[i], ys[i]);
            return Some(k0 + (k1 - k0) * y0 / (y0 - y1));
        }
    }
    None
}

/// Cheapest support proxy: the smallest k whose top-k weight sum exceeds the
/// control margin; None when the total positive mass is insufficient.
pub fn heuristic_support(dm: &Datamodel, control_margin: f64) -> Option<usize> {
    if control_margin <= 0.0 {
        return Some(0);
    }
    let mut weights: Vec<f64> = dm.theta.iter().copied().collect();
    weights.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc > control_margin {
            return Some(i + 1);
        }
    }
    None
}

/// Baseline removal-set selectors for the counterfactual scatter.
#[derive(Debug, Clone, Copy)]
pub enum BaselineSelector {
    /// First k of a per-target random ordering of same-class training
    /// examples (the ordering is fixed across k).
    RandomSameClass,
    /// k nearest training examples by raw-feature Euclidean distance.
    FeatureDistance,
}

pub fn baseline_group(
    selector: BaselineSelector,
    data: &TrainingSet,
    target_features: &ndarray::Array1<f64>,
    target_label: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    match selector {
        BaselineSelector::RandomSameClass => {
            let mut same: Vec<usize> =
                (0..data.len()).filter(|&i| data.labels[i] == target_label).collect();
            if k > same.len() {
                return Err(Error::InvalidParam(format!(
                    "k={k} exceeds class size {}",
                    same.len()
                )));
            }
            let mut rng = row_rng(seed, 0xBA5E);
            // Fisher-Yates; the full ordering is fixed, k takes a prefix
            for i in (1..same.len()).rev() {
                let j = rand::Rng::random_range(&mut rng, 0..=i);
                same.swap(i, j);
            }
            Ok(same[..k].to_vec())
        }
        BaselineSelector::FeatureDistance => {
            if k > data.len() {
                return Err(Error::InvalidParam(format!("k={k} exceeds training set {}", data.len())));
            }
            let mut scored: Vec<(f64, usize)> = (0..data.len())
                .map(|i| {
                    let diff = &data.features.row(i) - target_features;
                    (diff.dot(&diff), i)
                })
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            Ok(scored[..k].iter().map(|&(_, i)| i).collect())
        }
    }
}
