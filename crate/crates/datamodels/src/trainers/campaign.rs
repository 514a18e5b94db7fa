//! Training campaigns: sample subsets, train one model per subset, record
//! per-target outputs with the train-target exclusion channel. Rows are
//! independent (per-row seed keying), so campaigns run in parallel and
//! resume at row granularity.

use crate::data::{MaskMatrix, OutputFn, OutputMatrix, TargetSpec, TrainingSet};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::derive_seed;
use crate::sampling::{sample_masks, SubsetDistribution};

use super::{evaluate_outputs, Trainer};

fn row_train_seed(campaign_seed: u64, row: usize) -> u64 {
    // cheap per-row key; rows never share a training stream
    derive_seed(campaign_seed, "campaign-row").wrapping_add((row as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Computes output rows `rows.start..rows.end` of a campaign, one Vec per
/// row. Row content depends only on (masks row, seed, row index).
pub fn evaluate_campaign_rows(
    data: &TrainingSet,
    masks: &MaskMatrix,
    rows: std::ops::Range<usize>,
    trainer: &Trainer,
    output_fn: OutputFn,
    targets: &[TargetSpec],
    seed: u64,
) -> Result<Vec<Vec<f32>>> {
    if masks.d != data.len() {
        return Err(Error::Shape(format!(
            "masks width {} vs training set size {}",
            masks.d,
            data.len()
        )));
    }
    let results = parallel::map_indexed(rows.len(), |k| {
        let i = rows.start + k;
        let subset = masks.row(i);
        let model = trainer
            .train(data, &subset, row_train_seed(seed, i))
            .map_err(|e| Error::Degenerate(format!("campaign row {i}: {e}")))?;
        let vals = evaluate_outputs(&model, targets, output_fn)
            .map_err(|e| Error::Degenerate(format!("campaign row {i}: {e}")))?;
        Ok::<Vec<f32>, Error>(vals.into_iter().map(|v| v as f32).collect())
    });
    results.into_iter().collect()
}

/// Marks excluded (i, j) pairs: target j is a training example and row i's
/// subset contains it.
pub fn fill_exclusions(outputs: &mut OutputMatrix, masks: &MaskMatrix, targets: &[TargetSpec]) {
    for (j, t) in targets.iter().enumerate() {
        if let Some(train_idx) = t.train_index {
            for i in 0..masks.m {
                if masks.get(i, train_idx) {
                    outputs.set_excluded(i, j);
                }
            }
        }
    }
}

/// Campaign over a pre-sampled mask matrix.
pub fn run_campaign_on_masks(
    data: &TrainingSet,
    masks: &MaskMatrix,
    trainer: &Trainer,
    output_fn: OutputFn,
    targets: &[TargetSpec],
    seed: u64,
) -> Result<OutputMatrix> {
    let rows = evaluate_campaign_rows(data, masks, 0..masks.m, trainer, output_fn, targets, seed)?;
    let mut outputs = OutputMatrix::zeros(masks.m, targets.len(), output_fn, trainer.id());
    for (i, row) in rows.into_iter().enumerate() {
        outputs.values_row_mut(i).copy_from_slice(&row);
    }
    fill_exclusions(&mut outputs, masks, targets);
    Ok(outputs)
}

/// Full campaign: sample m subsets from `dist`, train on each, evaluate all
/// targets.
pub fn run_training_campaign(
    data: &TrainingSet,
    dist: &SubsetDistribution,
    m: usize,
    trainer: &Trainer,
    output_fn: OutputFn,
    targets: &[TargetSpec],
    seed: u64,
) -> Result<(MaskMatrix, OutputMatrix)> {
    let masks = sample_masks(dist, m)?;
    let outputs = run_campaign_on_masks(data, &masks, trainer, output_fn, targets, seed)?;
    Ok((masks, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubsetMask;
    use ndarray::{array, Array1};

    fn tiny_data() -> TrainingSet {
        let x = array![
            [1.0, 0.1],
            [0.2, 1.0],
            [-1.0, 0.3],
            [0.1, -1.0],
        ];
        TrainingSet::new(x, vec![0, 0, 1, 1], 2).unwrap()
    }

    fn targets_from_train(data: &TrainingSet, idx: &[usize]) -> Vec<TargetSpec> {
        idx.iter()
            .map(|&i| TargetSpec {
                features: data.features.row(i).to_owned(),
                label: data.labels[i],
                train_index: Some(i),
            })
            .collect()
    }

    #[test]
    fn outputs_match_direct_per_row_computation() {
        let data = tiny_data();
        let dist = SubsetDistribution::new(4, 0.5, 21).unwrap();
        let targets = vec![TargetSpec {
            features: Array1::from(vec![0.5, 0.5]),
            label: 0,
            train_index: None,
        }];
        let (masks, outputs) =
            run_training_campaign(&data, &dist, 2, &Trainer::MinNorm, OutputFn::Margin, &targets, 7)
                .unwrap();
        // independent direct computation per row
        for i in 0..2 {
            let subset = masks.row(i);
            let model = Trainer::MinNorm.train(&data, &subset, 0).unwrap();
            let logits = model.logits(targets[0].features.view());
            let want = crate::trainers::margin_from_logits(logits.view(), 0).unwrap();
            assert!((outputs.value(i, 0) - want).abs() < 1e-6);
        }
    }

    #[test]
    fn exclusion_column_all_ones_when_target_always_present() {
        let data = tiny_data();
        // handcrafted masks where index 2 is in every subset
        let rows = vec![
            SubsetMask::from_indices(&[0, 2], 4).unwrap(),
            SubsetMask::from_indices(&[1, 2], 4).unwrap(),
            SubsetMask::from_indices(&[2, 3], 4).unwrap(),
        ];
        let masks = MaskMatrix::from_rows(&rows, 0.5, 0).unwrap();
        let targets = targets_from_train(&data, &[2, 0]);
        let outputs =
            run_campaign_on_masks(&data, &masks, &Trainer::MinNorm, OutputFn::Margin, &targets, 0)
                .unwrap();
        for i in 0..3 {
            assert!(outputs.is_excluded(i, 0), "row {i} target 2 must be excluded");
        }
        // target 0 is present in row 0 only
        assert!(outputs.is_excluded(0, 1));
        assert!(!outputs.is_excluded(1, 1));
        assert!(!outputs.is_excluded(2, 1));
    }

    #[test]
    fn interrupted_campaign_resumes_identically() {
        let data = tiny_data();
        let dist = SubsetDistribution::new(4, 0.5, 3).unwrap();
        let masks = crate::sampling::sample_masks(&dist, 6).unwrap();
        let targets = targets_from_train(&data, &[0]);
        let full = evaluate_campaign_rows(&data, &masks, 0..6, &Trainer::MinNorm, OutputFn::Margin, &targets, 5)
            .unwrap();
        let first = evaluate_campaign_rows(&data, &masks, 0..3, &Trainer::MinNorm, OutputFn::Margin, &targets, 5)
            .unwrap();
        let rest = evaluate_campaign_rows(&data, &masks, 3..6, &Trainer::MinNorm, OutputFn::Margin, &targets, 5)
            .unwrap();
        let stitched: Vec<Vec<f32>> = first.into_iter().chain(rest).collect();
        assert_eq!(full, stitched);
    }

    #[test]
    fn trainer_errors_carry_row_index() {
        let data = tiny_data();
        let rows = vec![SubsetMask::from_indices(&[0], 4).unwrap(), SubsetMask::empty(4)];
        let masks = MaskMatrix::from_rows(&rows, 0.5, 0).unwrap();
        let targets = targets_from_train(&data, &[0]);
        let err =
            run_campaign_on_masks(&data, &masks, &Trainer::MinNorm, OutputFn::Margin, &targets, 0)
                .unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }
}
