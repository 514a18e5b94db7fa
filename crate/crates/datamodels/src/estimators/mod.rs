//! Datamodel estimation from (MaskMatrix, OutputMatrix) pairs: the SAGA
//! LASSO solver with regularization paths, exact OLS and difference-of-means
//! baselines, and the MSE/OPT evaluation metrics.

mod diff_means;
mod metrics;
mod ols;
mod saga;

pub use diff_means::diff_of_means_influence;
pub use metrics::{eval_mse, eval_opt, sparsity_stats, MseReport, OptEstimate};
pub use ols::{fit_ols, fit_ols_all, MaskEncoding, OlsFit, OlsOptions};
pub use saga::{fit_lasso_at, fit_lasso_multi, FitReport, LassoOptions};

use crate::error::{Error, Result};

/// Log-spaced regularization grid: `count` values in
/// (lambda_max/100, lambda_max], descending from lambda_max.
#[derive(Debug, Clone, Copy)]
pub struct RegularizationPath {
    pub lambda_max: f64,
    pub count: usize,
}

impl RegularizationPath {
    pub fn new(lambda_max: f64, count: usize) -> Result<Self> {
        if !(lambda_max > 0.0) {
            return Err(Error::InvalidParam(format!("lambda_max must be positive, got {lambda_max}")));
        }
        if count == 0 {
            return Err(Error::InvalidParam("path needs at least one lambda".into()));
        }
        Ok(RegularizationPath { lambda_max, count })
    }

    /// Strictly decreasing lambdas, largest first.
    pub fn lambdas(&self) -> Vec<f64> {
        let ratio = 0.01f64.powf(1.0 / self.count as f64);
        (0..self.count).map(|i| self.lambda_max * ratio.powi(i as i32)).collect()
    }
}

/// Row split of a campaign into solver training, validation (lambda
/// selection), and held-out test rows, in row order.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSpec {
    /// Default: one sixth validation, one sixth test.
    pub fn default_for(m: usize) -> Self {
        let val = m / 6;
        let test = m / 6;
        SplitSpec { train: m - val - test, val, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.train
    }

    pub fn val_range(&self) -> std::ops::Range<usize> {
        self.train..self.train + self.val
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.train + self.val..self.total()
    }
}
