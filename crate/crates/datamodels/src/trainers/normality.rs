//! Output-function screening: repeatedly train on one fixed subset, test
//! each candidate output channel's samples for normality, and recommend the
//! channel whose per-target p-values look most uniform.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::data::OutputFn;
use crate::error::{Error, Result};
use crate::stats::{dagostino_k2, ks_distance_uniform, NormalityTest};

#[derive(Debug, Clone)]
pub struct NormalityScreen {
    /// Per output function, one test per target column.
    pub tests: BTreeMap<&'static str, Vec<NormalityTest>>,
    /// Kolmogorov-Smirnov distance of the p-value sample to U[0,1].
    pub ks_to_uniform: BTreeMap<&'static str, f64>,
    pub recommended: OutputFn,
}

/// `samples[fn]` holds a T x n matrix: T repeated trainings on one fixed
/// subset, n targets. T must be at least 20.
pub fn normality_screen(samples: &BTreeMap<OutputFn, Array2<f64>>) -> Result<NormalityScreen> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("no output channels to screen".into()));
    }
    let mut tests = BTreeMap::new();
    let mut ks = BTreeMap::new();
    let mut best: Option<(f64, OutputFn)> = None;
    for (&f, mat) in samples {
        let t = mat.nrows();
        if t < 20 {
            return Err(Error::InvalidParam(format!(
                "normality screen needs >= 20 repeated trainings, got {t}"
            )));
        }
        let per_target: Vec<NormalityTest> = (0..mat.ncols())
            .map(|j| {
                let col: Vec<f64> = mat.column(j).to_vec();
                dagostino_k2(&col)
            })
            .collect();
        let ps: Vec<f64> = per_target.iter().map(|t| t.p_value).collect();
        let d = ks_distance_uniform(&ps);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, f));
        }
        tests.insert(f.name(), per_target);
        ks.insert(f.name(), d);
    }
    Ok(NormalityScreen { tests, ks_to_uniform: ks, recommended: best.unwrap().1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{next_normal, row_rng};

    #[test]
    fn normal_channel_beats_binary_channel() {
        let mut rng = row_rng(0, 0);
        let (t, n) = (200, 30);
        let mut normal = Array2::<f64>::zeros((t, n));
        let mut binary = Array2::<f64>::zeros((t, n));
        for j in 0..n {
            for i in 0..t {
                normal[(i, j)] = next_normal(&mut rng);
                binary[(i, j)] = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            }
        }
        let mut samples = BTreeMap::new();
        samples.insert(OutputFn::Margin, normal);
        samples.insert(OutputFn::Correctness, binary);
        let screen = normality_screen(&samples).unwrap();
        assert_eq!(screen.recommended, OutputFn::Margin);
        // binary data: every K^2 test rejects hard
        for t in &screen.tests["correctness"] {
            assert!(t.p_value < 0.001);
        }
        assert!(screen.ks_to_uniform["margin"] < screen.ks_to_uniform["correctness"]);
    }

    // Monte Carlo calibration: on true normal samples the rejection rate at
    // level 0.05 is 5% within 3 binomial sigma.
    #[test]
    fn k2_rejection_rate_calibrated() {
        let mut rng = row_rng(1, 0);
        let reps = 2000;
        let mut rejected = 0;
        for _ in 0..reps {
            let xs: Vec<f64> = (0..200).map(|_| next_normal(&mut rng)).collect();
            if dagostino_k2(&xs).p_value < 0.05 {
                rejected += 1;
            }
        }
        let rate = rejected as f64 / reps as f64;
        let sigma = (0.05 * 0.95 / reps as f64).sqrt();
        assert!(
            (rate - 0.05).abs() < 3.0 * sigma + 0.01,
            "rejection rate {rate} outside calibration band"
        );
    }

    #[test]
    fn constant_channel_sets_saturation_flag() {
        let mut samples = BTreeMap::new();
        samples.insert(OutputFn::Margin, Array2::from_elem((25, 3), 1.5));
        let screen = normality_screen(&samples).unwrap();
        for t in &screen.tests["margin"] {
            assert!(t.saturated);
            assert_eq!(t.p_value, 0.0);
        }
    }

    #[test]
    fn too_few_trials_rejected() {
        let mut samples = BTreeMap::new();
        samples.insert(OutputFn::Margin, Array2::zeros((10, 2)));
        assert!(normality_screen(&samples).is_err());
    }

    use rand::Rng;
}
