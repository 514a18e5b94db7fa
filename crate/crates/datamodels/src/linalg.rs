//! Dense symmetric linear algebra used by the trainers, estimators, and
//! embedding analyses: Cholesky with rank-deficiency detection, cyclic
//! Jacobi eigendecomposition, pseudoinverse solves, and seeded subspace
//! iteration. Everything is deterministic; matrices here are at most a few
//! hundred rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::rng::{next_normal, row_rng};

/// Relative eigenvalue floor for pseudoinverse solves. The nominal rank rule
/// (singular values of X below 1e-10 * sigma_max are zero, i.e. eigenvalues
/// of X X^T below 1e-20 relative) sits far below f64 eigenvalue resolution,
/// so the operative floor is a small multiple of machine epsilon.
pub const EIG_REL_CUTOFF: f64 = 64.0 * f64::EPSILON;

/// Cholesky factorization of a symmetric positive definite matrix.
/// Returns None when a pivot falls below `rel_tol` times the largest
/// diagonal entry (numerically rank-deficient input).
pub fn cholesky(a: &Array2<f64>, rel_tol: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
    let floor = rel_tol * max_diag.max(f64::MIN_POSITIVE);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= floor {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            let (row_i, row_j) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= row_i[k] * row_j[k];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

/// Solves L L^T x = b given the lower factor.
pub fn cholesky_solve(l: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and eigenvectors as matching columns.
pub fn jacobi_eigh(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return (m.diag().to_owned(), v);
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off / norm < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut vals: Vec<(f64, usize)> = (0..n).map(|i| (m[(i, i)], i)).collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let eigenvalues = Array1::from(vals.iter().map(|&(val, _)| val).collect::<Vec<_>>());
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (out_col, &(_, src_col)) in vals.iter().enumerate() {
        vectors.column_mut(out_col).assign(&v.column(src_col));
    }
    (eigenvalues, vectors)
}

/// Minimum-norm solution of the symmetric PSD system `a x = b` through the
/// eigendecomposition, zeroing eigenvalues below `EIG_REL_CUTOFF` relative
/// to the largest one.
pub fn solve_psd_min_norm(a: &Array2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let (vals, vecs) = jacobi_eigh(a);
    let lmax = vals.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let cutoff = lmax * EIG_REL_CUTOFF;
    let coeffs = vecs.t().dot(&b);
    let scaled = Array1::from(
        coeffs
            .iter()
            .zip(vals.iter())
            .map(|(&c, &l)| if l > cutoff { c / l } else { 0.0 })
            .collect::<Vec<_>>(),
    );
    vecs.dot(&scaled)
}

/// SPD solve with a Cholesky fast path and eigendecomposition fallback on
/// numerically rank-deficient input. The flag reports whether the fallback
/// fired.
pub fn solve_spd_or_min_norm(a: &Array2<f64>, b: ArrayView1<f64>) -> (Array1<f64>, bool) {
    match cholesky(a, 1e-12) {
        Some(l) => (cholesky_solve(&l, b), false),
        None => (solve_psd_min_norm(a, b), true),
    }
}

/// Orthonormalizes the columns of `v` in place (modified Gram-Schmidt, two
/// passes). Columns that vanish are refilled from a seeded generator and
/// re-orthogonalized, keeping the result full-rank and deterministic.
pub fn orthonormalize_columns(v: &mut Array2<f64>, seed: u64) {
    let (n, k) = v.dim();
    let mut refill = 0u64;
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = v.column(i).dot(&v.column(j));
                let vi = v.column(i).to_owned();
                v.column_mut(j).scaled_add(-proj, &vi);
            }
        }
        let norm = v.column(j).dot(&v.column(j)).sqrt();
        if norm > 1e-12 {
            v.column_mut(j).mapv_inplace(|x| x / norm);
        } else {
            let mut rng = row_rng(seed, 0xFACE ^ refill);
            refill += 1;
            for i in 0..n {
                v[(i, j)] = next_normal(&mut rng);
            }
            for i in 0..j {
                let proj = v.column(i).dot(&v.column(j));
                let vi = v.column(i).to_owned();
                v.column_mut(j).scaled_add(-proj, &vi);
            }
            let norm = v.column(j).dot(&v.column(j)).sqrt();
            v.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
}

/// Top-k eigenpairs of an implicit symmetric PSD operator by subspace
/// (orthogonal) iteration with a Rayleigh-Ritz rotation. `apply` maps an
/// n x k block V to A V. Eigenvalues return sorted descending.
pub fn subspace_iteration<F>(
    apply: F,
    n: usize,
    k: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> (Array1<f64>, Array2<f64>)
where
    F: Fn(&Array2<f64>) -> Array2<f64>,
{
    assert!(k <= n);
    let mut v = Array2::<f64>::zeros((n, k));
    let mut rng = row_rng(seed, 0);
    for x in v.iter_mut() {
        *x = next_normal(&mut rng);
    }
    orthonormalize_columns(&mut v, seed);
    let mut prev_ritz = Array1::<f64>::zeros(k);
    for it in 0..max_iters {
        let mut w = apply(&v);
        orthonormalize_columns(&mut w, seed);
        v = w;
        if it % 8 == 7 || it + 1 == max_iters {
            let av = apply(&v);
            let ritz: Array1<f64> = (0..k).map(|j| v.column(j).dot(&av.column(j))).collect();
            let scale = ritz.iter().fold(1e-300f64, |a, &b| a.max(b.abs()));
            let delta = ritz
                .iter()
                .zip(prev_ritz.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            prev_ritz = ritz;
            if delta < tol * scale {
                break;
            }
        }
    }
    // Rayleigh-Ritz: rotate the converged subspace into eigenvector estimates.
    let av = apply(&v);
    let small = v.t().dot(&av);
    let sym = 0.5 * (&small + &small.t());
    let (vals, rot) = jacobi_eigh(&sym);
    let rotated = v.dot(&rot);
    // descending order
    let k_ = vals.len();
    let values = Array1::from((0..k_).rev().map(|i| vals[i]).collect::<Vec<_>>());
    let mut vectors = Array2::<f64>::zeros((n, k_));
    for (out, src) in (0..k_).rev().enumerate() {
        vectors.column_mut(out).assign(&rotated.column(src));
    }
    (values, vectors)
}

/// Frobenius-norm check helper for tests: max |(A - B)_ij|.
pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Mean of each column.
pub fn column_means(a: ArrayView2<f64>) -> Array1<f64> {
    a.mean_axis(Axis(0)).expect("nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_spd(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = row_rng(seed, 0);
        let mut b = Array2::<f64>::zeros((n, n + 2));
        for x in b.iter_mut() {
            *x = next_normal(&mut rng);
        }
        b.dot(&b.t())
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = random_spd(12, 1);
        let b: Array1<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        let l = cholesky(&a, 1e-12).unwrap();
        let x = cholesky_solve(&l, b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn cholesky_detects_rank_deficiency() {
        // duplicate rows make the Gram exactly singular
        let x = array![[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 1.0, 1.0]];
        let g = x.dot(&x.t());
        assert!(cholesky(&g, 1e-12).is_none());
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = jacobi_eigh(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // reconstruct
        let lambda = Array2::from_diag(&vals);
        let rec = vecs.dot(&lambda).dot(&vecs.t());
        assert!(max_abs_diff(rec.view(), a.view()) < 1e-10);
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric() {
        let a = random_spd(20, 9);
        let (vals, vecs) = jacobi_eigh(&a);
        let rec = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        let scale = a.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(max_abs_diff(rec.view(), a.view()) < 1e-10 * scale.max(1.0));
        // orthonormal columns
        let eye = vecs.t().dot(&vecs);
        assert!(max_abs_diff(eye.view(), Array2::eye(20).view()) < 1e-10);
    }

    #[test]
    fn min_norm_solve_on_singular_system() {
        let x = array![[1.0, 1.0]];
        let g = x.dot(&x.t()); // 1x1 = [2]
        let y = Array1::from(vec![2.0]);
        let u = solve_psd_min_norm(&g, y.view());
        let w = x.t().dot(&u);
        // min-norm solution of 1x2 system w0 + w1 = 2 is [1, 1]
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subspace_iteration_matches_jacobi_on_dense_matrix() {
        let a = random_spd(30, 5);
        let (vals_j, _) = jacobi_eigh(&a);
        let (vals_s, vecs_s) = subspace_iteration(|v| a.dot(v), 30, 4, 500, 1e-14, 11);
        for i in 0..4 {
            let want = vals_j[30 - 1 - i];
            assert!(
                (vals_s[i] - want).abs() < 1e-8 * want.abs().max(1.0),
                "eig {i}: {} vs {}",
                vals_s[i],
                want
            );
        }
        let eye = vecs_s.t().dot(&vecs_s);
        assert!(max_abs_diff(eye.view(), Array2::eye(4).view()) < 1e-9);
    }
}
