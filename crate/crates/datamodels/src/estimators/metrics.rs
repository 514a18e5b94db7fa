//! Datamodel quality metrics: held-out mean-squared error (with the 1/2
//! convention), the irreducible-variance estimate OPT from repeated
//! trainings, and sparsity summaries.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::data::{Datamodel, MaskMatrix, OutputMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MseReport {
    pub per_target: Vec<f64>,
    /// (1/2n) sum_j mean_i (pred - y)^2
    pub average: f64,
}

/// Held-out MSE of fitted datamodels: per target j, half the mean squared
/// prediction error over non-excluded held-out rows, averaged over targets.
/// Held-out rows must be disjoint from the rows used for fitting.
pub fn eval_mse(
    models: &[Datamodel],
    masks: &MaskMatrix,
    outputs: &OutputMatrix,
) -> Result<MseReport> {
    if models.len() != outputs.n {
        return Err(Error::Shape(format!("{} datamodels vs {} target columns", models.len(), outputs.n)));
    }
    if masks.m != outputs.m {
        return Err(Error::Shape(format!("masks m={} vs outputs m={}", masks.m, outputs.m)));
    }
    let mut per_target = vec![0.0f64; models.len()];
    for (j, dm) in models.iter().enumerate() {
        if dm.d() != masks.d {
            return Err(Error::Shape(format!("datamodel {j} width {} vs masks d={}", dm.d(), masks.d)));
        }
        let theta = dm.theta.as_slice().expect("contiguous theta");
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..masks.m {
            if outputs.is_excluded(i, j) {
                continue;
            }
            let pred: f64 = masks.row_indices(i).iter().map(|&a| theta[a]).sum::<f64>() + dm.bias;
            let e = pred - outputs.value(i, j);
            sum += e * e;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Degenerate(format!("target {j}: no usable held-out rows")));
        }
        per_target[j] = 0.5 * sum / count as f64;
    }
    let average = per_target.iter().sum::<f64>() / per_target.len().max(1) as f64;
    Ok(MseReport { per_target, average })
}

#[derive(Debug, Clone)]
pub struct OptEstimate {
    pub per_target: Vec<f64>,
    /// (1/2n) sum_j mean over subsets of the unbiased within-subset variance
    pub average: f64,
    pub subsets: usize,
    pub trials: usize,
}

/// OPT from repeated trainings: `trials[s]` is a T x n matrix of outputs of
/// T independent trainings on the s-th fixed subset. Requires T >= 2.
pub fn eval_opt(trials: &[Array2<f64>]) -> Result<OptEstimate> {
    if trials.is_empty() {
        return Err(Error::InvalidParam("no repeat-training groups supplied".into()));
    }
    let n = trials[0].ncols();
    let t = trials[0].nrows();
    if t < 2 {
        return Err(Error::InvalidParam(format!("OPT needs >= 2 trials per subset, got {t}")));
    }
    let mut per_target = vec![0.0f64; n];
    for group in trials {
        if group.ncols() != n || group.nrows() < 2 {
            return Err(Error::Shape("inconsistent repeat-training group shapes".into()));
        }
        let tt = group.nrows() as f64;
        for j in 0..n {
            let col = group.column(j);
            let mean = col.sum() / tt;
            let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (tt - 1.0);
            per_target[j] += 0.5 * var / trials.len() as f64;
        }
    }
    let average = per_target.iter().sum::<f64>() / n.max(1) as f64;
    Ok(OptEstimate { per_target, average, subsets: trials.len(), trials: t })
}

/// Histogram of nonzero-weight counts across datamodels.
pub fn sparsity_stats(models: &[Datamodel]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for dm in models {
        *hist.entry(dm.sparsity()).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{OutputFn, SubsetMask};
    use crate::rng::{next_normal, row_rng};
    use ndarray::Array1;

    fn simple_masks(m: usize, d: usize, seed: u64) -> MaskMatrix {
        crate::sampling::iid_bernoulli_masks(d, 0.5, m, seed).unwrap()
    }

    #[test]
    fn perfect_predictor_has_zero_mse() {
        let masks = simple_masks(50, 4, 1);
        let theta = Array1::from(vec![1.0, -2.0, 0.5, 0.0]);
        let mut outputs = OutputMatrix::zeros(50, 1, OutputFn::Margin, "t");
        for i in 0..50 {
            let m = SubsetMask::from_bytes_unchecked(masks.row_bytes(i).to_vec(), 4);
            outputs.set_value(i, 0, m.dot(theta.as_slice().unwrap()) + 0.25);
        }
        let dm = Datamodel {
            theta,
            bias: 0.25,
            alpha: 0.5,
            lambda: 0.0,
            target_id: 0,
            output_fn: OutputFn::Margin,
            trainer_id: "t".into(),
        };
        let rep = eval_mse(&[dm], &masks, &outputs).unwrap();
        assert!(rep.average < 1e-12);
    }

    #[test]
    fn constant_predictor_mse_is_half_variance() {
        let masks = simple_masks(20_000, 3, 2);
        let mut rng = row_rng(5, 0);
        let mut outputs = OutputMatrix::zeros(20_000, 1, OutputFn::Margin, "t");
        let sigma = 0.7;
        let mut sum = 0.0;
        for i in 0..20_000 {
            let v = sigma * next_normal(&mut rng);
            sum += v;
            outputs.set_value(i, 0, v);
        }
        let dm = Datamodel {
            theta: Array1::zeros(3),
            bias: sum / 20_000.0,
            alpha: 0.5,
            lambda: 0.0,
            target_id: 0,
            output_fn: OutputFn::Margin,
            trainer_id: "t".into(),
        };
        let rep = eval_mse(&[dm], &masks, &outputs).unwrap();
        let want = 0.5 * sigma * sigma;
        assert!((rep.average - want).abs() < 0.02, "{} vs {want}", rep.average);
    }

    #[test]
    fn opt_zero_for_deterministic_trainer() {
        let groups = vec![Array2::from_elem((5, 3), 1.25), Array2::from_elem((5, 3), -0.5)];
        let opt = eval_opt(&groups).unwrap();
        assert_eq!(opt.average, 0.0);
    }

    #[test]
    fn opt_recovers_injected_variance() {
        // injected N(0, 0.04) noise: OPT should be ~ 0.04/2 = 0.02
        let mut rng = row_rng(8, 0);
        let groups: Vec<Array2<f64>> = (0..40)
            .map(|_| {
                let mut g = Array2::<f64>::zeros((25, 2));
                for v in g.iter_mut() {
                    *v = 3.0 + 0.2 * next_normal(&mut rng);
                }
                g
            })
            .collect();
        let opt = eval_opt(&groups).unwrap();
        assert!((opt.average - 0.02).abs() < 0.004, "OPT {}", opt.average);
    }

    #[test]
    fn opt_requires_two_trials() {
        let groups = vec![Array2::zeros((1, 2))];
        assert!(eval_opt(&groups).is_err());
    }

    #[test]
    fn sparsity_histogram() {
        let mk = |theta: Vec<f64>| Datamodel {
            theta: Array1::from(theta),
            bias: 0.0,
            alpha: 0.5,
            lambda: 0.0,
            target_id: 0,
            output_fn: OutputFn::Margin,
            trainer_id: "t".into(),
        };
        let hist = sparsity_stats(&[mk(vec![0.0, 0.0]), mk(vec![1.0, 2.0]), mk(vec![1.0, 0.0])]);
        assert_eq!(hist[&0], 1);
        assert_eq!(hist[&1], 1);
        assert_eq!(hist[&2], 1);
    }
}
