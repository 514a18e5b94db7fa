//! Datamodel embeddings: each target's weight vector theta reinterpreted as
//! a feature representation. Similarity, nearest neighbors by weight,
//! spectral clustering, PCA, and principal-component removal plans.

mod pca;
mod spectral;

pub use pca::{explained_variance_curve, fit_pca, pc_extremes, pc_removal_plan, PcRemovalPlan, PcSign, PcaModel};
pub use spectral::{kmeans, spectral_cluster, SpectralResult};

use ndarray::{Array1, Array2};

use crate::data::Datamodel;
use crate::error::{Error, Result};
use crate::parallel;

/// One embedding row per target (n x d).
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub rows: Array2<f64>,
    pub normalized: bool,
    /// Rows with zero norm (flagged, left unnormalized).
    pub zero_rows: Vec<usize>,
}

impl EmbeddingMatrix {
    pub fn new(rows: Array2<f64>) -> Self {
        EmbeddingMatrix { rows, normalized: false, zero_rows: Vec::new() }
    }

    pub fn from_datamodels(models: &[Datamodel]) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParam("no datamodels".into()));
        }
        let d = models[0].d();
        let mut rows = Array2::zeros((models.len(), d));
        for (i, dm) in models.iter().enumerate() {
            if dm.d() != d {
                return Err(Error::Shape("datamodel widths differ".into()));
            }
            rows.row_mut(i).assign(&dm.theta);
        }
        Ok(EmbeddingMatrix::new(rows))
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Rows scaled to unit Euclidean norm; zero rows are flagged and kept.
    pub fn normalize(&self) -> EmbeddingMatrix {
        let mut rows = self.rows.clone();
        let mut zero_rows = Vec::new();
        for (i, mut r) in rows.outer_iter_mut().enumerate() {
            let norm = r.dot(&r).sqrt();
            if norm > 0.0 {
                r.mapv_inplace(|x| x / norm);
            } else {
                zero_rows.push(i);
            }
        }
        EmbeddingMatrix { rows, normalized: true, zero_rows }
    }
}

/// RBF similarity matrix A_ij = exp(-||phi_i - phi_j||^2 / (2 sigma^2)).
/// `sigma = None` uses the median pairwise distance. Returns the matrix and
/// the sigma actually used.
pub fn rbf_similarity(emb: &EmbeddingMatrix, sigma: Option<f64>) -> Result<(Array2<f64>, f64)> {
    let n = emb.n();
    if n == 0 {
        return Err(Error::InvalidParam("empty embedding".into()));
    }
    if let Some(s) = sigma {
        if !(s > 0.0) {
            return Err(Error::InvalidParam(format!("sigma must be positive, got {s}")));
        }
    }
    // squared distances via the Gram matrix
    let gram = emb.rows.dot(&emb.rows.t());
    let sq: Vec<f64> = (0..n).map(|i| gram[(i, i)]).collect();
    let mut d2 = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = (sq[i] + sq[j] - 2.0 * gram[(i, j)]).max(0.0);
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }
    let sigma = match sigma {
        Some(s) => s,
        None => {
            let mut dists: Vec<f64> = (0..n)
                .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
                .map(|(i, j)| d2[(i, j)].sqrt())
                .collect();
            if dists.is_empty() {
                1.0
            } else {
                dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let med = dists[dists.len() / 2];
                if med > 0.0 {
                    med
                } else {
                    1.0
                }
            }
        }
    };
    let denom = 2.0 * sigma * sigma;
    let mut a = Array2::<f64>::zeros((n, n));
    let buf = a.as_slice_mut().expect("contiguous");
    parallel::for_each_chunk_mut(buf, n, |i, row| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (-d2[(i, j)] / denom).exp();
        }
    });
    Ok((a, sigma))
}

/// Ranking key for weight-based nearest neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborSign {
    Positive,
    Negative,
    Magnitude,
}

/// Training indices ranked by datamodel weight under the chosen key; stable
/// (index order) under ties. The flag reports an all-zero weight vector
/// (ordering carries no signal).
pub fn top_weight_neighbors(dm: &Datamodel, count: usize, sign: NeighborSign) -> Result<(Vec<usize>, bool)> {
    if count > dm.d() {
        return Err(Error::InvalidParam(format!("count {count} exceeds d={}", dm.d())));
    }
    let key = |j: usize| -> f64 {
        match sign {
            NeighborSign::Positive => dm.theta[j],
            NeighborSign::Negative => -dm.theta[j],
            NeighborSign::Magnitude => dm.theta[j].abs(),
        }
    };
    let mut order: Vec<usize> = (0..dm.d()).collect();
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap().then(a.cmp(&b)));
    order.truncate(count);
    let no_signal = dm.theta.iter().all(|&v| v == 0.0);
    Ok((order, no_signal))
}

/// Column means helper shared by the PCA pieces.
pub(crate) fn center(rows: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mean = rows.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let mut centered = rows.clone();
    for mut r in centered.outer_iter_mut() {
        r -= &mean;
    }
    (centered, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutputFn;

    fn dm(theta: Vec<f64>) -> Datamodel {
        Datamodel {
            theta: Array1::from(theta),
            bias: 0.0,
            alpha: 0.5,
            lambda: 0.0,
            target_id: 0,
            output_fn: OutputFn::Margin,
            trainer_id: "t".into(),
        }
    }

    #[test]
    fn rbf_identical_rows_have_unit_similarity() {
        let rows = Array2::from_shape_vec((3, 2), vec![1.0, 2.0, 1.0, 2.0, 0.0, 0.0]).unwrap();
        let (a, _) = rbf_similarity(&EmbeddingMatrix::new(rows), Some(1.0)).unwrap();
        assert!((a[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((a[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(a[(0, 2)] < 1.0);
    }

    #[test]
    fn rbf_half_similarity_algebra() {
        // ||phi_0 - phi_1||^2 = 2 sigma^2 ln 2  =>  A_01 = 1/2
        let sigma = 0.8;
        let dist2 = 2.0 * sigma * sigma * (2.0f64).ln();
        let rows =
            Array2::from_shape_vec((2, 1), vec![0.0, dist2.sqrt()]).unwrap();
        let (a, _) = rbf_similarity(&EmbeddingMatrix::new(rows), Some(sigma)).unwrap();
        assert!((a[(0, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rbf_is_positive_semidefinite() {
        let mut rng = crate::rng::row_rng(7, 0);
        let mut rows = Array2::<f64>::zeros((25, 6));
        for v in rows.iter_mut() {
            *v = crate::rng::next_normal(&mut rng);
        }
        let (a, sigma) = rbf_similarity(&EmbeddingMatrix::new(rows), None).unwrap();
        assert!(sigma > 0.0);
        let (vals, _) = crate::linalg::jacobi_eigh(&a);
        assert!(vals[0] >= -1e-8, "min eigenvalue {}", vals[0]);
    }

    #[test]
    fn normalization_flags_zero_rows() {
        let rows = Array2::from_shape_vec((2, 2), vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let e = EmbeddingMatrix::new(rows).normalize();
        assert!(e.normalized);
        assert_eq!(e.zero_rows, vec![1]);
        let norm = e.rows.row(0).dot(&e.rows.row(0)).sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neighbor_rankings() {
        let m = dm(vec![0.1, -0.5, 0.3]);
        assert_eq!(top_weight_neighbors(&m, 2, NeighborSign::Magnitude).unwrap().0, vec![1, 2]);
        assert_eq!(top_weight_neighbors(&m, 2, NeighborSign::Positive).unwrap().0, vec![2, 0]);
        assert_eq!(top_weight_neighbors(&m, 1, NeighborSign::Negative).unwrap().0, vec![1]);
        let (order, flag) = top_weight_neighbors(&dm(vec![0.0; 4]), 4, NeighborSign::Magnitude).unwrap();
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert!(flag, "all-zero theta must be flagged as no-signal");
    }

    /// A training point that duplicates the target's generator carries the
    /// top positive weight.
    #[test]
    fn planted_duplicate_ranks_first() {
        use crate::data::TargetSpec;
        use crate::estimators::{fit_lasso_multi, LassoOptions, SplitSpec};
        use crate::trainers::Trainer;

        let mut rng = crate::rng::row_rng(19, 0);
        let d = 24;
        let f = 6;
        let mut x = Array2::<f64>::zeros((d, f));
        for v in x.iter_mut() {
            *v = crate::rng::next_normal(&mut rng);
        }
        let labels: Vec<usize> = (0..d).map(|i| i % 2).collect();
        let data = crate::data::TrainingSet::new(x.clone(), labels.clone(), 2).unwrap();
        // target duplicates training point 5
        let targets = vec![TargetSpec { features: x.row(5).to_owned(), label: labels[5], train_index: None }];
        let dist = crate::sampling::SubsetDistribution::new(d, 0.5, 3).unwrap();
        let (masks, outputs) = crate::trainers::run_training_campaign(
            &data,
            &dist,
            3_000,
            &Trainer::MinNorm,
            OutputFn::Margin,
            &targets,
            11,
        )
        .unwrap();
        let fits =
            fit_lasso_multi(&masks, &outputs, SplitSpec::default_for(3_000), &LassoOptions::default())
                .unwrap();
        let (order, no_signal) =
            top_weight_neighbors(&fits[0].0, 3, NeighborSign::Positive).unwrap();
        assert!(!no_signal);
        assert_eq!(order[0], 5, "duplicate generator must rank first: {order:?}");
    }
}
