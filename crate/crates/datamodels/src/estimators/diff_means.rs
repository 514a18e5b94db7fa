//! Empirical influence by difference of conditional means: for each
//! training index, the mean output over subsets containing it minus the
//! mean over subsets excluding it.

use crate::data::{MaskMatrix, OutputMatrix};
use crate::error::{Error, Result};

/// Per-index difference of means for one target column; excluded rows are
/// dropped. Errors (listing the offending indices) when some index is never
/// included or never excluded among the usable rows.
pub fn diff_of_means_influence(
    masks: &MaskMatrix,
    outputs: &OutputMatrix,
    target: usize,
) -> Result<Vec<f64>> {
    if masks.m != outputs.m {
        return Err(Error::Shape(format!("masks m={} vs outputs m={}", masks.m, outputs.m)));
    }
    if target >= outputs.n {
        return Err(Error::InvalidParam(format!("target {target} out of range {}", outputs.n)));
    }
    let d = masks.d;
    let mut sum_in = vec![0.0f64; d];
    let mut count_in = vec![0u64; d];
    let mut total = 0.0f64;
    let mut kept = 0u64;
    for i in 0..masks.m {
        if outputs.is_excluded(i, target) {
            continue;
        }
        let y = outputs.value(i, target);
        total += y;
        kept += 1;
        for j in masks.row_indices(i) {
            sum_in[j] += y;
            count_in[j] += 1;
        }
    }
    let never_in: Vec<usize> = (0..d).filter(|&j| count_in[j] == 0).collect();
    if !never_in.is_empty() {
        return Err(Error::UndefinedCoordinate { side: "never-included", indices: never_in });
    }
    let never_out: Vec<usize> = (0..d).filter(|&j| count_in[j] == kept).collect();
    if !never_out.is_empty() {
        return Err(Error::UndefinedCoordinate { side: "never-excluded", indices: never_out });
    }
    Ok((0..d)
        .map(|j| {
            let inc = sum_in[j] / count_in[j] as f64;
            let exc = (total - sum_in[j]) / (kept - count_in[j]) as f64;
            inc - exc
        })
        .collect())
}
