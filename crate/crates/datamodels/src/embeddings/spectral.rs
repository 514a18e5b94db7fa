//! Spectral clustering on a similarity matrix: symmetric normalized
//! Laplacian, bottom-k eigenvectors (row-normalized), then seeded
//! k-means++ with restarts.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::jacobi_eigh;
use crate::parallel;
use crate::rng::{next_normal, row_rng};

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub labels: Vec<usize>,
    /// Number of eigenvectors used for the embedding.
    pub k: usize,
    /// Some node had (near-)zero degree; a floor was applied.
    pub degree_floored: bool,
    /// Laplacian spectrum, ascending.
    pub eigenvalues: Array1<f64>,
    pub inertia: f64,
}

/// Lloyd iterations from a k-means++ seeding; returns labels and inertia.
fn kmeans_once(points: ArrayView2<f64>, c: usize, seed: u64) -> (Vec<usize>, f64) {
    let (n, dim) = points.dim();
    let mut rng = row_rng(seed, 0x4B4D);
    let mut centers = Array2::<f64>::zeros((c, dim));
    // k-means++ seeding
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut dist2: Vec<f64> = (0..n)
        .map(|i| {
            let d = &points.row(i) - &centers.row(0);
            d.dot(&d)
        })
        .collect();
    for next in 1..c {
        let total: f64 = dist2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        };
        centers.row_mut(next).assign(&points.row(pick));
        for i in 0..n {
            let d = &points.row(i) - &centers.row(next);
            dist2[i] = dist2[i].min(d.dot(&d));
        }
    }
    let mut labels = vec![0usize; n];
    for _iter in 0..300 {
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0usize);
            for cc in 0..c {
                let d = &points.row(i) - &centers.row(cc);
                let v = d.dot(&d);
                if v < best.0 {
                    best = (v, cc);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut counts = vec![0usize; c];
        centers.fill(0.0);
        for i in 0..n {
            counts[labels[i]] += 1;
            let mut row = centers.row_mut(labels[i]);
            row += &points.row(i);
        }
        for cc in 0..c {
            if counts[cc] > 0 {
                centers.row_mut(cc).mapv_inplace(|x| x / counts[cc] as f64);
            } else {
                // re-seed an empty cluster deterministically
                for v in centers.row_mut(cc).iter_mut() {
                    *v = next_normal(&mut rng) * 1e-3;
                }
            }
        }
    }
    let inertia: f64 = (0..n)
        .map(|i| {
            let d = &points.row(i) - &centers.row(labels[i]);
            d.dot(&d)
        })
        .sum();
    (labels, inertia)
}

/// Seeded k-means++ with `restarts` independent starts, keeping the lowest
/// inertia.
pub fn kmeans(points: ArrayView2<f64>, c: usize, restarts: usize, seed: u64) -> Result<(Vec<usize>, f64)> {
    let n = points.nrows();
    if c == 0 || c > n {
        return Err(Error::InvalidParam(format!("need 1 <= clusters <= {n}, got {c}")));
    }
    let runs = parallel::map_indexed(restarts.max(1), |r| kmeans_once(points, c, seed.wrapping_add(r as u64)));
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap())
}

/// Spectral clustering of a symmetric nonnegative similarity matrix into
/// `c` clusters using `k` Laplacian eigenvectors (default min(100, n)).
pub fn spectral_cluster(a: &Array2<f64>, c: usize, k: Option<usize>, seed: u64) -> Result<SpectralResult> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::Shape("similarity matrix must be square and nonempty".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] < 0.0 {
                return Err(Error::InvalidParam(format!("negative similarity at ({i},{j})")));
            }
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!("similarity not symmetric at ({i},{j})")));
            }
        }
    }
    let k = k.unwrap_or_else(|| n.min(100)).min(n).max(1);
    if c == 0 || c > n {
        return Err(Error::InvalidParam(format!("need 1 <= clusters <= {n}, got {c}")));
    }

    // symmetric normalized Laplacian with a degree floor for isolated nodes
    let mut degree_floored = false;
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a.row(i).sum();
            if d <= 1e-12 {
                degree_floored = true;
                1.0 / 1e-12f64.sqrt()
            } else {
                1.0 / d.sqrt()
            }
        })
        .collect();
    let mut lap = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = -inv_sqrt_deg[i] * a[(i, j)] * inv_sqrt_deg[j];
            lap[(i, j)] = if i == j { 1.0 + v } else { v };
        }
    }
    let (vals, vecs) = jacobi_eigh(&lap);
    // bottom-k eigenvectors, row-normalized
    let mut emb = Array2::<f64>::zeros((n, k));
    for col in 0..k {
        emb.column_mut(col).assign(&vecs.column(col));
    }
    for mut row in emb.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|x| x / norm);
        }
    }
    let (labels, inertia) = kmeans(emb.view(), c, 10, seed)?;
    Ok(SpectralResult { labels, k, degree_floored, eigenvalues: vals, inertia })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{rbf_similarity, EmbeddingMatrix};
    use crate::stats::adjusted_rand_index;

    fn block_similarity(sizes: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let n: usize = sizes.iter().sum();
        let mut a = Array2::<f64>::zeros((n, n));
        let mut truth = Vec::new();
        let mut start = 0;
        for (b, &s) in sizes.iter().enumerate() {
            for i in start..start + s {
                truth.push(b);
                for j in start..start + s {
                    a[(i, j)] = 1.0;
                }
            }
            start += s;
        }
        (a, truth)
    }

    #[test]
    fn ideal_blocks_recovered_exactly() {
        let (a, truth) = block_similarity(&[5, 7]);
        let res = spectral_cluster(&a, 2, Some(2), 3).unwrap();
        assert!((adjusted_rand_index(&res.labels, &truth) - 1.0).abs() < 1e-12);
        // connected components give eigenvalue 0 with multiplicity 2
        assert!(res.eigenvalues[0].abs() < 1e-9);
        assert!(res.eigenvalues[1].abs() < 1e-9);
        assert!(res.eigenvalues[2] > 0.1);
    }

    #[test]
    fn laplacian_spectrum_in_range() {
        let mut rng = crate::rng::row_rng(4, 0);
        let mut rows = Array2::<f64>::zeros((20, 3));
        for v in rows.iter_mut() {
            *v = crate::rng::next_normal(&mut rng);
        }
        let (a, _) = rbf_similarity(&EmbeddingMatrix::new(rows), None).unwrap();
        let res = spectral_cluster(&a, 2, None, 0).unwrap();
        assert_eq!(res.k, 20);
        for &v in res.eigenvalues.iter() {
            assert!(v > -1e-9 && v < 2.0 + 1e-9, "eigenvalue {v}");
        }
        assert!(res.eigenvalues[0].abs() < 1e-9, "connected graph has a zero eigenvalue");
    }

    #[test]
    fn planted_blobs_recovered() {
        // three well-separated Gaussian blobs in embedding space
        let mut rng = crate::rng::row_rng(11, 0);
        let n_per = 30;
        let mut rows = Array2::<f64>::zeros((3 * n_per, 8));
        let mut truth = Vec::new();
        for b in 0..3 {
            for i in 0..n_per {
                truth.push(b);
                for f in 0..8 {
                    let center = if f == b { 6.0 } else { 0.0 };
                    rows[(b * n_per + i, f)] = center + crate::rng::next_normal(&mut rng);
                }
            }
        }
        let (a, _) = rbf_similarity(&EmbeddingMatrix::new(rows), None).unwrap();
        let res = spectral_cluster(&a, 3, Some(3), 5).unwrap();
        let ari = adjusted_rand_index(&res.labels, &truth);
        assert!(ari >= 0.95, "ARI {ari}");
    }

    #[test]
    fn single_cluster_is_trivial() {
        let (a, _) = block_similarity(&[6]);
        let res = spectral_cluster(&a, 1, Some(2), 0).unwrap();
        assert!(res.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn permutation_equivariance() {
        let (a, _) = block_similarity(&[4, 5, 3]);
        let res = spectral_cluster(&a, 3, Some(3), 7).unwrap();
        // reverse the node order
        let n = 12;
        let mut b = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = a[(n - 1 - i, n - 1 - j)];
            }
        }
        let res_perm = spectral_cluster(&b, 3, Some(3), 7).unwrap();
        let relabeled: Vec<usize> = (0..n).map(|i| res_perm.labels[n - 1 - i]).collect();
        assert!((adjusted_rand_index(&res.labels, &relabeled) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_degree_node_floored_and_flagged() {
        let mut a = Array2::<f64>::zeros((4, 4));
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = 1.0;
            }
        }
        // node 3 fully disconnected (zero row)
        let res = spectral_cluster(&a, 2, Some(2), 1).unwrap();
        assert!(res.degree_floored);
        assert_eq!(res.labels.len(), 4);
    }

    #[test]
    fn kmeans_requires_valid_cluster_count() {
        let pts = Array2::<f64>::zeros((3, 2));
        assert!(kmeans(pts.view(), 0, 1, 0).is_err());
        assert!(kmeans(pts.view(), 4, 1, 0).is_err());
    }

    use rand::Rng;
}
