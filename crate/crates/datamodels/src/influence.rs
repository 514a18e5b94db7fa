//! Numerical verification of the influence/datamodel equivalence: the
//! rescaled least-squares estimator converges to half the empirical
//! influence on exact 50%-subsets, estimator quality comparisons on a
//! shared campaign, and the multilinear-extension derivative check.

use ndarray::Array1;

use crate::data::{MaskMatrix, OutputFn, OutputMatrix};
use crate::error::{Error, Result};
use crate::estimators::{
    diff_of_means_influence, fit_lasso_multi, fit_ols_all, LassoOptions, MaskEncoding, OlsOptions,
    SplitSpec,
};
use crate::rng::{derive_seed, next_normal, row_rng};
use crate::sampling::{iid_bernoulli_masks, sample_masks, SubsetDistribution};
use crate::stats::{auc, spearman};

#[derive(Debug, Clone, Copy)]
pub struct LemmaPoint {
    pub m: usize,
    /// ||(1 + 2/n) w_OLS - w_infl / 2||_2
    pub gap: f64,
    /// gap / ||w_infl||_2
    pub rel_gap: f64,
}

/// Gap between the rescaled pm1 least-squares weights (no bias) and half
/// the difference-of-means influence, on recorded correctness outputs.
pub fn lemma_gap(masks: &MaskMatrix, outputs: &OutputMatrix, target: usize) -> Result<LemmaPoint> {
    let n = masks.d;
    let fits = crate::estimators::fit_ols(
        masks,
        outputs,
        target,
        OlsOptions { encoding: MaskEncoding::PlusMinusOne, bias: false },
    )?;
    let w_ols = fits.datamodel.theta;
    let w_infl = Array1::from(diff_of_means_influence(masks, outputs, target)?);
    let scale = 1.0 + 2.0 / n as f64;
    let diff = &w_ols * scale - &w_infl * 0.5;
    let gap = diff.dot(&diff).sqrt();
    let infl_norm = w_infl.dot(&w_infl).sqrt();
    Ok(LemmaPoint {
        m: masks.m,
        gap,
        rel_gap: if infl_norm > 0.0 { gap / infl_norm } else { 0.0 },
    })
}

/// Synthetic correctness world for the lemma: theta* is a centered standard
/// normal vector and a model trained on subset S is "correct" iff
/// theta* . mask(S) > 0. Returns one gap per m in the grid. n must be even
/// (exact 50%-subsets).
pub fn lemma_convergence_check(n: usize, m_grid: &[usize], seed: u64) -> Result<Vec<LemmaPoint>> {
    if n % 2 != 0 {
        return Err(Error::InvalidParam(format!("50%-subsets need even n, got {n}")));
    }
    if n < 2 {
        return Err(Error::InvalidParam("need n >= 2".into()));
    }
    let mut rng = row_rng(derive_seed(seed, "lemma-theta"), 0);
    let mut theta: Vec<f64> = (0..n).map(|_| next_normal(&mut rng)).collect();
    let mean = theta.iter().sum::<f64>() / n as f64;
    for t in theta.iter_mut() {
        *t -= mean;
    }
    m_grid
        .iter()
        .map(|&m| {
            let dist = SubsetDistribution::new(n, 0.5, derive_seed(seed, &format!("lemma-m{m}")))?;
            let masks = sample_masks(&dist, m)?;
            let mut outputs = OutputMatrix::zeros(m, 1, OutputFn::Correctness, "synthetic");
            for i in 0..m {
                let s: f64 = masks.row_indices(i).iter().map(|&j| theta[j]).sum();
                outputs.set_value(i, 0, if s > 0.0 { 1.0 } else { 0.0 });
            }
            lemma_gap(&masks, &outputs, 0)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EstimatorMetrics {
    pub id: &'static str,
    pub spearman: f64,
    /// Margin-based estimators only; output types are incomparable in MSE.
    pub mse: Option<f64>,
    /// None when the held-out correctness column is degenerate (one class).
    pub auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<EstimatorMetrics>,
}

impl ComparisonReport {
    pub fn get(&self, id: &str) -> Option<&EstimatorMetrics> {
        self.rows.iter().find(|r| r.id == id)
    }
}

/// Fits four estimators on one shared campaign (margin and correctness
/// channels recorded from the same models) and scores them on the held-out
/// test rows: Spearman of predictions against same-type outputs, MSE for
/// the margin-based estimators, and AUC of the prediction as a correctness
/// classifier.
pub fn compare_estimators(
    masks: &MaskMatrix,
    outputs_margin: &OutputMatrix,
    outputs_correctness: &OutputMatrix,
    split: SplitSpec,
    lasso: &LassoOptions,
) -> Result<ComparisonReport> {
    if outputs_margin.n != outputs_correctness.n || outputs_margin.m != outputs_correctness.m {
        return Err(Error::Shape("margin and correctness channels differ in shape".into()));
    }
    if split.total() != masks.m {
        return Err(Error::Shape("split does not cover the mask rows".into()));
    }
    let n = outputs_margin.n;
    let fit_rows = 0..split.train + split.val;
    let fit_masks = masks.slice_rows(fit_rows.clone());
    let fit_margin = outputs_margin.slice_rows(fit_rows.clone());
    let fit_correct = outputs_correctness.slice_rows(fit_rows.clone());

    let lasso_fits = fit_lasso_multi(masks, outputs_margin, split, lasso)?;
    let ols_fits = fit_ols_all(&fit_masks, &fit_margin, OlsOptions::default())?;

    // diff-of-means weights plus a mean-matching intercept
    let dm_prediction_setup = |outputs_fit: &OutputMatrix| -> Result<Vec<(Vec<f64>, f64)>> {
        (0..n)
            .map(|j| {
                let w = diff_of_means_influence(&fit_masks, outputs_fit, j)?;
                let (y, excl) = outputs_fit.column(j);
                let mut ybar = 0.0;
                let mut vbar = vec![0.0f64; fit_masks.d];
                let mut count = 0usize;
                for i in 0..fit_masks.m {
                    if excl[i] {
                        continue;
                    }
                    ybar += y[i];
                    for a in fit_masks.row_indices(i) {
                        vbar[a] += 1.0;
                    }
                    count += 1;
                }
                ybar /= count as f64;
                let wv: f64 = w.iter().zip(vbar.iter()).map(|(wi, vi)| wi * vi / count as f64).sum();
                Ok((w, ybar - wv))
            })
            .collect()
    };
    let dm_margin = dm_prediction_setup(&fit_margin)?;
    let dm_correct = dm_prediction_setup(&fit_correct)?;

    // held-out predictions and truths
    let test = split.test_range();
    let mut rows = Vec::new();
    let predict =
        |theta: &[f64], bias: f64, i: usize| -> f64 { masks.row_indices(i).iter().map(|&a| theta[a]).sum::<f64>() + bias };

    let mut run = |id: &'static str, params: Vec<(Vec<f64>, f64)>, margin_based: bool| {
        let mut preds = Vec::new();
        let mut truth = Vec::new();
        let mut correct_truth = Vec::new();
        for j in 0..n {
            for i in test.clone() {
                if outputs_margin.is_excluded(i, j) {
                    continue;
                }
                preds.push(predict(&params[j].0, params[j].1, i));
                truth.push(if margin_based {
                    outputs_margin.value(i, j)
                } else {
                    outputs_correctness.value(i, j)
                });
                correct_truth.push(outputs_correctness.value(i, j));
            }
        }
        let mse = if margin_based {
            Some(
                preds.iter().zip(truth.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
                    / (2.0 * preds.len() as f64),
            )
        } else {
            None
        };
        rows.push(EstimatorMetrics {
            id,
            spearman: spearman(&preds, &truth),
            mse,
            auc: auc(&preds, &correct_truth),
        });
    };

    run(
        "lasso_margin",
        lasso_fits.iter().map(|(dm, _)| (dm.theta.to_vec(), dm.bias)).collect(),
        true,
    );
    run(
        "ols",
        ols_fits.iter().map(|f| (f.datamodel.theta.to_vec(), f.datamodel.bias)).collect(),
        true,
    );
    run("diff_means_margin", dm_margin, true);
    run("diff_means_correctness", dm_correct, false);
    Ok(ComparisonReport { rows })
}

/// Exact partial derivative of the multilinear extension of the set
/// function tabulated in `f_table` (index = bitmask over n elements) with
/// respect to element `i`, at the product point `x`.
pub fn multilinear_partial(f_table: &[f64], n: usize, i: usize, x: &[f64]) -> Result<f64> {
    if f_table.len() != 1usize << n {
        return Err(Error::Shape(format!("table has {} entries, expected 2^{n}", f_table.len())));
    }
    if n > 24 {
        return Err(Error::InvalidParam("exhaustive table too large".into()));
    }
    if i >= n || x.len() != n {
        return Err(Error::InvalidParam("element index or point out of range".into()));
    }
    let mut total = 0.0;
    // iterate subsets of [n] \ {i}
    let bit = 1usize << i;
    for s in 0..(1usize << n) {
        if s & bit != 0 {
            continue;
        }
        let mut w = 1.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            w *= if s & (1 << j) != 0 { x[j] } else { 1.0 - x[j] };
        }
        total += w * (f_table[s | bit] - f_table[s]);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct DerivativeCheck {
    pub analytic: f64,
    pub influence_estimate: f64,
    /// Monte Carlo standard error of the influence estimate.
    pub se: f64,
}

/// Compares the exact multilinear derivative at x = alpha * 1 against the
/// Bernoulli(alpha)-subsampled difference-of-means influence estimate.
pub fn multilinear_derivative_check(
    f_table: &[f64],
    n: usize,
    i: usize,
    alpha: f64,
    samples: usize,
    seed: u64,
) -> Result<DerivativeCheck> {
    let analytic = multilinear_partial(f_table, n, i, &vec![alpha; n])?;
    let masks = iid_bernoulli_masks(n, alpha, samples, derive_seed(seed, "mlx"))?;
    let (mut s1, mut c1, mut s0, mut c0) = (0.0f64, 0usize, 0.0f64, 0usize);
    let (mut q1, mut q0) = (0.0f64, 0.0f64);
    for r in 0..samples {
        let mut idx_bits = 0usize;
        for j in masks.row_indices(r) {
            idx_bits |= 1 << j;
        }
        let f = f_table[idx_bits];
        if idx_bits & (1 << i) != 0 {
            s1 += f;
            q1 += f * f;
            c1 += 1;
        } else {
            s0 += f;
            q0 += f * f;
            c0 += 1;
        }
    }
    if c1 == 0 || c0 == 0 {
        return Err(Error::Degenerate("element never (or always) sampled".into()));
    }
    let m1 = s1 / c1 as f64;
    let m0 = s0 / c0 as f64;
    let v1 = (q1 / c1 as f64 - m1 * m1).max(0.0) / c1 as f64;
    let v0 = (q0 / c0 as f64 - m0 * m0).max(0.0) / c0 as f64;
    Ok(DerivativeCheck { analytic, influence_estimate: m1 - m0, se: (v1 + v0).sqrt() })
}
