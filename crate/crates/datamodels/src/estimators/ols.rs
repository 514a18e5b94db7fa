//! Exact ordinary least squares on mask designs via normal equations built
//! from bit-level co-occurrence counts. Fixed-cardinality masks make the
//! intercept-augmented Gram exactly singular (every row sums to the same
//! count), so the pseudoinverse fallback is the normal path there and the
//! returned solution is the minimum-norm representative.

use ndarray::{Array1, Array2};

use crate::data::{Datamodel, MaskMatrix, OutputFn, OutputMatrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, jacobi_eigh, EIG_REL_CUTOFF};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEncoding {
    /// characteristic vector entries in {0, 1}
    Binary,
    /// z = 2 * mask - 1, entries in {-1, +1}
    PlusMinusOne,
}

#[derive(Debug, Clone, Copy)]
pub struct OlsOptions {
    pub encoding: MaskEncoding,
    pub bias: bool,
}

impl Default for OlsOptions {
    fn default() -> Self {
        OlsOptions { encoding: MaskEncoding::Binary, bias: true }
    }
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub datamodel: Datamodel,
    /// Gram matrix was singular; the eigendecomposition pseudoinverse
    /// produced the minimum-norm solution.
    pub pseudoinverse_fallback: bool,
    /// Fewer usable rows than parameters: the system is underdetermined and
    /// the solution is minimum-norm OLS.
    pub min_norm: bool,
}

struct NormalEquations {
    gram: Array2<f64>,
    width: usize,
    bias: bool,
}

/// Normal-equation Gram over all rows (no exclusions) from co-occurrence
/// counts, for either encoding, with optional intercept column appended.
fn shared_gram(masks: &MaskMatrix, opts: OlsOptions) -> NormalEquations {
    let d = masks.d;
    let coc = masks.cooccurrence_gram();
    let m = masks.m as f64;
    let width = d + usize::from(opts.bias);
    let mut gram = Array2::<f64>::zeros((width, width));
    for a in 0..d {
        for b in a..d {
            let pair = coc.pair_count(a, b) as f64;
            let v = match opts.encoding {
                MaskEncoding::Binary => pair,
                MaskEncoding::PlusMinusOne => {
                    4.0 * pair - 2.0 * coc.counts[a] as f64 - 2.0 * coc.counts[b] as f64 + m
                }
            };
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    if opts.bias {
        for a in 0..d {
            let v = match opts.encoding {
                MaskEncoding::Binary => coc.counts[a] as f64,
                MaskEncoding::PlusMinusOne => 2.0 * coc.counts[a] as f64 - m,
            };
            gram[(a, d)] = v;
            gram[(d, a)] = v;
        }
        gram[(d, d)] = m;
    }
    NormalEquations { gram, width, bias: opts.bias }
}

/// X^T y over the kept rows of one target column, for either encoding, with
/// the intercept component appended when requested.
fn rhs_for_target(
    masks: &MaskMatrix,
    y: &[f64],
    keep: &[bool],
    opts: OlsOptions,
) -> Array1<f64> {
    let d = masks.d;
    let width = d + usize::from(opts.bias);
    let mut rhs = Array1::<f64>::zeros(width);
    let mut total = 0.0;
    for i in 0..masks.m {
        if !keep[i] {
            continue;
        }
        let yi = y[i];
        total += yi;
        for a in masks.row_indices(i) {
            rhs[a] += yi;
        }
    }
    if let MaskEncoding::PlusMinusOne = opts.encoding {
        for a in 0..d {
            rhs[a] = 2.0 * rhs[a] - total;
        }
    }
    if opts.bias {
        rhs[d] = total;
    }
    rhs
}

/// Subtracts excluded rows' contributions from a shared Gram.
fn corrected_gram(base: &NormalEquations, masks: &MaskMatrix, excluded_rows: &[usize], opts: OlsOptions) -> Array2<f64> {
    let d = masks.d;
    let mut gram = base.gram.clone();
    for &i in excluded_rows {
        let idx = masks.row_indices(i);
        match opts.encoding {
            MaskEncoding::Binary => {
                for &a in &idx {
                    for &b in &idx {
                        gram[(a, b)] -= 1.0;
                    }
                }
                if opts.bias {
                    for &a in &idx {
                        gram[(a, d)] -= 1.0;
                        gram[(d, a)] -= 1.0;
                    }
                    gram[(d, d)] -= 1.0;
                }
            }
            MaskEncoding::PlusMinusOne => {
                let mut z = vec![-1.0; d];
                for &a in &idx {
                    z[a] = 1.0;
                }
                for a in 0..d {
                    for b in 0..d {
                        gram[(a, b)] -= z[a] * z[b];
                    }
                }
                if opts.bias {
                    for a in 0..d {
                        gram[(a, d)] -= z[a];
                        gram[(d, a)] -= z[a];
                    }
                    gram[(d, d)] -= 1.0;
                }
            }
        }
    }
    gram
}

fn solve_normal_equations(gram: &Array2<f64>, rhs: &Array1<f64>) -> (Array1<f64>, bool) {
    match cholesky(gram, 1e-12) {
        Some(l) => (cholesky_solve(&l, rhs.view()), false),
        None => {
            let (vals, vecs) = jacobi_eigh(gram);
            let lmax = vals.iter().fold(0.0f64, |a, &b| a.max(b));
            let cutoff = lmax * EIG_REL_CUTOFF;
            let coef = vecs.t().dot(rhs);
            let scaled: Array1<f64> = coef
                .iter()
                .zip(vals.iter())
                .map(|(&c, &l)| if l > cutoff { c / l } else { 0.0 })
                .collect();
            (vecs.dot(&scaled), true)
        }
    }
}

fn fit_from_solution(
    solution: Array1<f64>,
    d: usize,
    opts: OlsOptions,
    target: usize,
    outputs: &OutputMatrix,
    masks: &MaskMatrix,
    fallback: bool,
    kept: usize,
) -> OlsFit {
    let theta = Array1::from(solution.as_slice().unwrap()[..d].to_vec());
    let bias = if opts.bias { solution[d] } else { 0.0 };
    OlsFit {
        datamodel: Datamodel {
            theta,
            bias,
            alpha: masks.alpha,
            lambda: 0.0,
            target_id: target as u64,
            output_fn: outputs.output_fn,
            trainer_id: outputs.trainer_id.clone(),
        },
        pseudoinverse_fallback: fallback,
        min_norm: kept < d + usize::from(opts.bias) || fallback,
    }
}

/// Exact OLS for one target column (excluded rows dropped).
pub fn fit_ols(
    masks: &MaskMatrix,
    outputs: &OutputMatrix,
    target: usize,
    opts: OlsOptions,
) -> Result<OlsFit> {
    if masks.m != outputs.m {
        return Err(Error::Shape(format!("masks m={} vs outputs m={}", masks.m, outputs.m)));
    }
    if target >= outputs.n {
        return Err(Error::InvalidParam(format!("target {target} out of range {}", outputs.n)));
    }
    let base = shared_gram(masks, opts);
    let (y, excl) = outputs.column(target);
    let keep: Vec<bool> = excl.iter().map(|&e| !e).collect();
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == 0 {
        return Err(Error::Degenerate(format!("target {target}: every row excluded")));
    }
    let excluded_rows: Vec<usize> = (0..masks.m).filter(|&i| excl[i]).collect();
    let gram = if excluded_rows.is_empty() {
        base.gram.clone()
    } else {
        corrected_gram(&base, masks, &excluded_rows, opts)
    };
    let rhs = rhs_for_target(masks, &y, &keep, opts);
    let (solution, fallback) = solve_normal_equations(&gram, &rhs);
    debug_assert_eq!(solution.len(), base.width);
    let _ = base.bias;
    Ok(fit_from_solution(solution, masks.d, opts, target, outputs, masks, fallback, kept))
}

/// OLS for every target column, sharing the Gram factorization across
/// exclusion-free targets. Returns fits in target order.
pub fn fit_ols_all(
    masks: &MaskMatrix,
    outputs: &OutputMatrix,
    opts: OlsOptions,
) -> Result<Vec<OlsFit>> {
    if masks.m != outputs.m {
        return Err(Error::Shape(format!("masks m={} vs outputs m={}", masks.m, outputs.m)));
    }
    let base = shared_gram(masks, opts);
    // one spectral factorization reused by every exclusion-free target
    let (vals, vecs) = jacobi_eigh(&base.gram);
    let lmax = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = lmax * EIG_REL_CUTOFF;
    let shared_singular = vals.iter().any(|&l| l <= cutoff);

    let fits = parallel::map_indexed(outputs.n, |j| {
        let (y, excl) = outputs.column(j);
        let keep: Vec<bool> = excl.iter().map(|&e| !e).collect();
        let kept = keep.iter().filter(|&&k| k).count();
        if kept == 0 {
            return Err(Error::Degenerate(format!("target {j}: every row excluded")));
        }
        let rhs = rhs_for_target(masks, &y, &keep, opts);
        if kept == masks.m {
            let coef = vecs.t().dot(&rhs);
            let scaled: Array1<f64> = coef
                .iter()
                .zip(vals.iter())
                .map(|(&c, &l)| if l > cutoff { c / l } else { 0.0 })
                .collect();
            let solution = vecs.dot(&scaled);
            Ok(fit_from_solution(solution, masks.d, opts, j, outputs, masks, shared_singular, kept))
        } else {
            let excluded_rows: Vec<usize> = (0..masks.m).filter(|&i| excl[i]).collect();
            let gram = corrected_gram(&base, masks, &excluded_rows, opts);
            let (solution, fallback) = solve_normal_equations(&gram, &rhs);
            Ok(fit_from_solution(solution, masks.d, opts, j, outputs, masks, fallback, kept))
        }
    });
    fits.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubsetMask;

    fn masks_from(rows: &[&[usize]], d: usize) -> MaskMatrix {
        let rows: Vec<SubsetMask> =
            rows.iter().map(|r| SubsetMask::from_indices(r, d).unwrap()).collect();
        MaskMatrix::from_rows(&rows, 0.5, 0).unwrap()
    }

    fn outputs_from(vals: &[&[f64]], f: OutputFn) -> OutputMatrix {
        let m = vals.len();
        let n = vals[0].len();
        let mut o = OutputMatrix::zeros(m, n, f, "test");
        for i in 0..m {
            for j in 0..n {
                o.set_value(i, j, vals[i][j]);
            }
        }
        o
    }

    #[test]
    fn identity_design_recovers_outputs() {
        let masks = masks_from(&[&[0], &[1]], 2);
        let outputs = outputs_from(&[&[3.0], &[5.0]], OutputFn::Margin);
        let fit = fit_ols(&masks, &outputs, 0, OlsOptions { encoding: MaskEncoding::Binary, bias: false })
            .unwrap();
        assert!((fit.datamodel.theta[0] - 3.0).abs() < 1e-10);
        assert!((fit.datamodel.theta[1] - 5.0).abs() < 1e-10);
    }

    #[test]
    fn pm1_encoding_of_mask() {
        // one row [1,0] encoded z = [1,-1]; with outputs 2.0 and no bias the
        // min-norm solution satisfies z.w = 2 => w = [1,-1]
        let masks = masks_from(&[&[0]], 2);
        let outputs = outputs_from(&[&[2.0]], OutputFn::Margin);
        let fit = fit_ols(
            &masks,
            &outputs,
            0,
            OlsOptions { encoding: MaskEncoding::PlusMinusOne, bias: false },
        )
        .unwrap();
        assert!(fit.min_norm);
        assert!((fit.datamodel.theta[0] - 1.0).abs() < 1e-10);
        assert!((fit.datamodel.theta[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_system_matches_qr_oracle() {
        // 500 x 10 Bernoulli design, well-determined; no bias so the QR
        // oracle applies directly
        let masks = crate::sampling::iid_bernoulli_masks(10, 0.4, 500, 3).unwrap();
        let mut rng = crate::rng::row_rng(9, 0);
        let theta_true: Vec<f64> = (0..10).map(|_| crate::rng::next_normal(&mut rng)).collect();
        let mut outputs = OutputMatrix::zeros(500, 1, OutputFn::Margin, "t");
        for i in 0..500 {
            let mut v = 0.0;
            for j in masks.row_indices(i) {
                v += theta_true[j];
            }
            outputs.set_value(i, 0, v + 0.01 * crate::rng::next_normal(&mut rng));
        }
        let fit = fit_ols(&masks, &outputs, 0, OlsOptions { encoding: MaskEncoding::Binary, bias: false })
            .unwrap();
        assert!(!fit.pseudoinverse_fallback);

        let dense = masks.dense_block(0..500);
        let y: Array1<f64> = (0..500).map(|i| outputs.value(i, 0)).collect();
        let oracle = crate::oracle::qr_least_squares(dense.view(), y.view());
        for j in 0..10 {
            assert!(
                (fit.datamodel.theta[j] - oracle[j]).abs() < 1e-9,
                "coord {j}: {} vs {}",
                fit.datamodel.theta[j],
                oracle[j]
            );
        }
    }

    #[test]
    fn fixed_cardinality_with_bias_takes_pseudoinverse_path() {
        let dist = crate::sampling::SubsetDistribution::new(8, 0.5, 1).unwrap();
        let masks = crate::sampling::sample_masks(&dist, 200).unwrap();
        let mut outputs = OutputMatrix::zeros(200, 1, OutputFn::Margin, "t");
        for i in 0..200 {
            outputs.set_value(i, 0, masks.row_cardinality(i) as f64 + (i % 3) as f64 * 0.1);
        }
        let fit = fit_ols(&masks, &outputs, 0, OlsOptions::default()).unwrap();
        assert!(fit.pseudoinverse_fallback, "intercept + fixed row sums must be singular");
        assert!(fit.min_norm);
    }

    #[test]
    fn exclusions_change_the_fit() {
        let masks = masks_from(&[&[0], &[1], &[0, 1]], 2);
        let mut outputs = outputs_from(&[&[3.0], &[5.0], &[100.0]], OutputFn::Margin);
        outputs.set_excluded(2, 0);
        let fit = fit_ols(&masks, &outputs, 0, OlsOptions { encoding: MaskEncoding::Binary, bias: false })
            .unwrap();
        // row 2 excluded: identity system again
        assert!((fit.datamodel.theta[0] - 3.0).abs() < 1e-9);
        assert!((fit.datamodel.theta[1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn all_targets_matches_per_target() {
        let masks = crate::sampling::iid_bernoulli_masks(6, 0.5, 80, 7).unwrap();
        let mut outputs = OutputMatrix::zeros(80, 3, OutputFn::Margin, "t");
        let mut rng = crate::rng::row_rng(11, 0);
        for i in 0..80 {
            for j in 0..3 {
                outputs.set_value(i, j, crate::rng::next_normal(&mut rng));
            }
        }
        outputs.set_excluded(5, 1);
        outputs.set_excluded(9, 1);
        let all = fit_ols_all(&masks, &outputs, OlsOptions::default()).unwrap();
        for j in 0..3 {
            let single = fit_ols(&masks, &outputs, j, OlsOptions::default()).unwrap();
            for a in 0..6 {
                assert!(
                    (all[j].datamodel.theta[a] - single.datamodel.theta[a]).abs() < 1e-8,
                    "target {j} coord {a}"
                );
            }
            assert!((all[j].datamodel.bias - single.datamodel.bias).abs() < 1e-8);
        }
    }
}
