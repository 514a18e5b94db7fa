//! Independent reference implementations used as test oracles. Nothing here
//! is called by the library's production paths: each function deliberately
//! takes a different algorithmic route than the implementation it checks
//! (feature-side SVD vs row-side Gram, Householder QR vs normal equations,
//! cyclic coordinate descent vs SAGA).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::linalg::jacobi_eigh;

/// Min-norm least squares through the feature-side eigendecomposition
/// (SVD of X via X^T X), independent of the row-Gram route the trainer uses.
pub fn min_norm_via_svd(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let xtx = x.t().dot(&x);
    let (vals, vecs) = jacobi_eigh(&xtx);
    let lmax = vals.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = lmax * 1e-12;
    // w = V diag(1/lambda) V^T X^T y on the nonzero spectrum
    let xty = x.t().dot(&y);
    let coef = vecs.t().dot(&xty);
    let scaled: Array1<f64> = coef
        .iter()
        .zip(vals.iter())
        .map(|(&c, &l)| if l > cutoff { c / l } else { 0.0 })
        .collect();
    vecs.dot(&scaled)
}

/// Least squares by Householder QR (with column pivoting omitted: callers
/// pass well-conditioned tall systems). Returns the coefficient vector for
/// design `a` (m x n, m >= n) and rhs `b`.
pub fn qr_least_squares(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let (m, n) = a.dim();
    assert!(m >= n, "QR oracle expects a tall system");
    let mut r = a.to_owned();
    let mut qtb = b.to_owned();
    for k in 0..n {
        // Householder vector for column k
        let mut norm = 0.0;
        for i in k..m {
            norm += r[(i, k)] * r[(i, k)];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; m - k];
        v[0] = r[(k, k)] - alpha;
        for i in k + 1..m {
            v[i - k] = r[(i, k)];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            continue;
        }
        for j in k..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * r[(i, j)];
            }
            let s = 2.0 * dot / vtv;
            for i in k..m {
                r[(i, j)] -= s * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..m {
            dot += v[i - k] * qtb[i];
        }
        let s = 2.0 * dot / vtv;
        for i in k..m {
            qtb[i] -= s * v[i - k];
        }
    }
    // back substitution on the upper-triangular block
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Perceptron separability check: returns true when the (augmented)
/// perceptron converges within `max_updates` mistakes, which certifies
/// linear separability.
pub fn perceptron_separable(features: &Array2<f64>, labels: &[usize], max_updates: usize) -> bool {
    let (n, f) = features.dim();
    let mut w = vec![0.0; f + 1];
    let mut updates = 0;
    loop {
        let mut clean = true;
        for i in 0..n {
            let y = if labels[i] == 0 { 1.0 } else { -1.0 };
            let mut z = w[f];
            for j in 0..f {
                z += w[j] * features[(i, j)];
            }
            if y * z <= 0.0 {
                for j in 0..f {
                    w[j] += y * features[(i, j)];
                }
                w[f] += y;
                updates += 1;
                clean = false;
                if updates >= max_updates {
                    return false;
                }
            }
        }
        if clean {
            return true;
        }
    }
}

/// Reference LASSO by cyclic coordinate descent with an unpenalized
/// intercept, minimizing mean((X w + b - y)^2) over `rows` + lambda*||w||_1.
/// Masks enter as dense 0/1 columns. Converges to a tight tolerance; this
/// is the dual route against the production SAGA solver.
pub fn lasso_coordinate_descent(
    masks: &crate::data::MaskMatrix,
    y: &[f64],
    keep: &[bool],
    lambda: f64,
    fit_bias: bool,
    max_sweeps: usize,
) -> (Array1<f64>, f64) {
    let d = masks.d;
    let rows: Vec<usize> = (0..masks.m).filter(|&i| keep[i]).collect();
    let m_eff = rows.len() as f64;
    assert!(m_eff > 0.0);
    // column membership lists over the kept rows
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (r, &i) in rows.iter().enumerate() {
        for j in masks.row_indices(i) {
            cols[j].push(r);
        }
    }
    let yk: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    // residual r = y - Xw - b
    let mut resid = yk.clone();
    if fit_bias {
        b = resid.iter().sum::<f64>() / m_eff;
        for r in resid.iter_mut() {
            *r -= b;
        }
    }
    for _sweep in 0..max_sweeps {
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            let nj = cols[j].len() as f64;
            if nj == 0.0 {
                continue;
            }
            // partial residual correlation; columns are 0/1 so sums suffice
            let mut rho: f64 = cols[j].iter().map(|&r| resid[r]).sum();
            rho = rho / m_eff + w[j] * nj / m_eff;
            let a = nj / m_eff;
            let thr = lambda / 2.0;
            let new = if rho > thr {
                (rho - thr) / a
            } else if rho < -thr {
                (rho + thr) / a
            } else {
                0.0
            };
            let delta = new - w[j];
            if delta != 0.0 {
                for &r in &cols[j] {
                    resid[r] -= delta;
                }
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if fit_bias {
            let shift = resid.iter().sum::<f64>() / m_eff;
            if shift != 0.0 {
                b += shift;
                for r in resid.iter_mut() {
                    *r -= shift;
                }
                max_delta = max_delta.max(shift.abs());
            }
        }
        if max_delta < 1e-13 {
            break;
        }
    }
    (w, b)
}

/// A synthetic world whose outputs are exactly linear in the subset mask
/// plus seeded Gaussian noise: target j's output on subset S is
/// bias_j + sum_{i in S} thetas[j][i] + noise. Used to plant ground truth
/// for counterfactual and support tests.
pub struct PlantedLinearOracle {
    pub thetas: Array2<f64>,
    pub biases: Array1<f64>,
    pub noise: f64,
}

impl crate::trainers::SubsetOracle for PlantedLinearOracle {
    fn n_targets(&self) -> usize {
        self.thetas.nrows()
    }

    fn d(&self) -> usize {
        self.thetas.ncols()
    }

    fn outputs(&self, subset: &crate::data::SubsetMask, trial_seed: u64) -> crate::error::Result<Vec<f64>> {
        let idx = subset.indices();
        let mut rng = crate::rng::row_rng(trial_seed, 0x9420);
        Ok((0..self.n_targets())
            .map(|j| {
                let s: f64 = idx.iter().map(|&i| self.thetas[(j, i)]).sum();
                self.biases[j] + s + self.noise * crate::rng::next_normal(&mut rng)
            })
            .collect())
    }

    fn outputs_relabeled(
        &self,
        _subset: &crate::data::SubsetMask,
        _relabel: &[(usize, usize)],
        _trial_seed: u64,
    ) -> crate::error::Result<Vec<f64>> {
        Err(crate::error::Error::InvalidParam(
            "planted linear oracle has no labels to flip".into(),
        ))
    }
}

/// Exact minimal top-k flipping size in a planted linear world: the
/// smallest k whose cumulative sorted-descending weight sum meets or
/// exceeds the control margin (margin after removal <= 0). None when even
/// removing everything positive cannot flip the target.
pub fn exact_minimal_topk(theta: &Array1<f64>, control_margin: f64) -> Option<usize> {
    if control_margin <= 0.0 {
        return Some(0);
    }
    let mut w: Vec<f64> = theta.to_vec();
    w.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    for (i, v) in w.iter().enumerate() {
        acc += v;
        if control_margin - acc <= 0.0 {
            return Some(i + 1);
        }
    }
    None
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal matrices, via the sine-based formulation that stays accurate
/// for tiny angles.
pub fn max_principal_angle(q1: ArrayView2<f64>, q2: ArrayView2<f64>) -> f64 {
    assert_eq!(q1.ncols(), q2.ncols());
    // residual of q2 after projecting onto span(q1): singular values are sin(theta)
    let proj = q1.dot(&q1.t().dot(&q2));
    let r = &q2 - &proj;
    let rtr = r.t().dot(&r);
    let (vals, _) = jacobi_eigh(&rtr);
    let max_sin2 = vals.iter().fold(0.0f64, |a, &b| a.max(b)).max(0.0);
    max_sin2.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn qr_matches_exact_solution() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let b = array![1.0, 2.0, 3.0];
        let x = qr_least_squares(a.view(), b.view());
        // normal equations: A^T A = [[2,1],[1,2]], A^T b = [4,5]
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perceptron_certifies_separable_and_gives_up_otherwise() {
        let sep = array![[2.0, 2.0], [3.0, 2.5], [-2.0, -2.0], [-3.0, -1.5]];
        assert!(perceptron_separable(&sep, &[0, 0, 1, 1], 1000));
        let not_sep = array![[1.0, 0.0], [-1.0, 0.0], [0.9, 0.0], [-0.9, 0.0]];
        assert!(!perceptron_separable(&not_sep, &[0, 1, 1, 0], 2000));
    }

    #[test]
    fn principal_angle_zero_for_same_span() {
        let q = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(max_principal_angle(q.view(), q.view()) < 1e-9);
        let q2 = array![[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]]; // same span, swapped
        assert!(max_principal_angle(q.view(), q2.view()) < 1e-9);
        let q3 = array![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        let angle = max_principal_angle(q.view(), q3.view());
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }
}
