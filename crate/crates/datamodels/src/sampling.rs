//! Subset sampling: the fixed-cardinality alpha-subset distribution, i.i.d.
//! Bernoulli masks, and remove-then-subsample draws for random-control
//! counterfactuals. Row i of any sampled matrix depends only on (seed, i).

use rand::Rng;

use crate::data::{MaskMatrix, SubsetMask};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::{round_half_even, row_rng, sample_indices};

/// Uniform distribution over subsets of `0..d-1` with cardinality
/// round(alpha * d).
#[derive(Debug, Clone, Copy)]
pub struct SubsetDistribution {
    pub d: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SubsetDistribution {
    pub fn new(d: usize, alpha: f64, seed: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParam(format!("alpha must be in (0,1), got {alpha}")));
        }
        if d == 0 {
            return Err(Error::InvalidParam("universe size d must be positive".into()));
        }
        Ok(SubsetDistribution { d, alpha, seed })
    }

    /// Fixed subset cardinality round(alpha * d), rounding half to even.
    pub fn cardinality(&self) -> usize {
        round_half_even(self.alpha * self.d as f64)
    }

    fn check_nondegenerate(&self) -> Result<usize> {
        let k = self.cardinality();
        if k == 0 || k == self.d {
            return Err(Error::Degenerate(format!(
                "round(alpha*d) = {k} with d = {} leaves no variation in subsets",
                self.d
            )));
        }
        Ok(k)
    }

    /// Row i of the mask stream, independent of any other row.
    pub fn sample_row(&self, i: u64) -> Result<SubsetMask> {
        let k = self.check_nondegenerate()?;
        let mut rng = row_rng(self.seed, i);
        let idx = sample_indices(&mut rng, self.d, k);
        SubsetMask::from_indices(&idx, self.d)
    }
}

/// Draws `m` independent fixed-cardinality subsets. Deterministic given
/// (seed, d, alpha, m); rows may be generated in parallel.
pub fn sample_masks(dist: &SubsetDistribution, m: usize) -> Result<MaskMatrix> {
    if m == 0 {
        return Err(Error::InvalidParam("need at least one subset".into()));
    }
    let k = dist.check_nondegenerate()?;
    let mut masks = MaskMatrix::zeros(m, dist.d, dist.alpha, dist.seed);
    let stride = masks.row_stride();
    let (d, seed) = (dist.d, dist.seed);
    parallel::for_each_chunk_mut(masks.raw_bytes_mut(), stride, |i, row| {
        let mut rng = row_rng(seed, i as u64);
        for j in sample_indices(&mut rng, d, k) {
            row[j / 8] |= 1 << (j % 8);
        }
    });
    Ok(masks)
}

/// Each bit independently 1 with probability alpha; row cardinality varies.
pub fn iid_bernoulli_masks(d: usize, alpha: f64, m: usize, seed: u64) -> Result<MaskMatrix> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!("alpha must be in (0,1), got {alpha}")));
    }
    if d == 0 || m == 0 {
        return Err(Error::InvalidParam("need d >= 1 and m >= 1".into()));
    }
    let mut masks = MaskMatrix::zeros(m, d, alpha, seed);
    let stride = masks.row_stride();
    parallel::for_each_chunk_mut(masks.raw_bytes_mut(), stride, |i, row| {
        let mut rng = row_rng(seed, i as u64);
        for j in 0..d {
            if rng.random::<f64>() < alpha {
                row[j / 8] |= 1 << (j % 8);
            }
        }
    });
    Ok(masks)
}

/// One draw over `S \ removed`: every index outside `removed` is included
/// independently with probability alpha; removed indices are always absent.
/// `trial` keys the draw so trials are order-independent.
pub fn remove_and_subsample(
    full_d: usize,
    removed: &[usize],
    alpha: f64,
    seed: u64,
    trial: u64,
) -> Result<SubsetMask> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParam(format!("alpha must be in (0,1], got {alpha}")));
    }
    let mut is_removed = vec![false; full_d];
    for &r in removed {
        if r >= full_d {
            return Err(Error::InvalidParam(format!("removed index {r} out of range {full_d}")));
        }
        is_removed[r] = true;
    }
    if is_removed.iter().all(|&r| r) {
        return Err(Error::Degenerate("removal leaves an empty training set".into()));
    }
    let mut rng = row_rng(seed, trial);
    let mut mask = SubsetMask::empty(full_d);
    for j in 0..full_d {
        // one uniform draw per index, removed or not, so the stream layout
        // does not depend on the removed set
        let u: f64 = rng.random();
        if !is_removed[j] && u < alpha {
            mask.set(j);
        }
    }
    Ok(mask)
}
