//! Pool-adjacent-violators for monotone curve fitting.

/// Least-squares non-increasing fit of `y` (equal weights) by PAV.
/// Input x-positions must be strictly increasing; only y is used, but the
/// signature keeps call sites honest about ordering.
pub fn pava_non_increasing(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n <= 1 {
        return y.to_vec();
    }
    // fit the negated sequence as non-decreasing
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for &v in y {
        let mut lv = -v;
        let mut wt = 1.0;
        while let Some(&prev) = level.last() {
            if prev <= lv {
                break;
            }
            let pw = weight.pop().unwrap();
            let pl = level.pop().unwrap();
            lv = (pl * pw + lv * wt) / (pw + wt);
            wt += pw;
        }
        level.push(lv);
        weight.push(wt);
    }
    let mut out = Vec::with_capacity(n);
    for (lv, wt) in level.iter().zip(weight.iter()) {
        for _ in 0..(*wt as usize) {
            out.push(-lv);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_monotone_is_unchanged() {
        let y = [3.0, 2.0, 2.0, -1.0];
        assert_eq!(pava_non_increasing(&y), y.to_vec());
    }

    #[test]
    fn violator_pair_is_pooled() {
        let y = [1.0, 2.0, 0.0];
        let fit = pava_non_increasing(&y);
        assert!((fit[0] - 1.5).abs() < 1e-12);
        assert!((fit[1] - 1.5).abs() < 1e-12);
        assert!((fit[2] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn output_is_non_increasing_on_noise() {
        let mut rng = crate::rng::row_rng(2, 0);
        let y: Vec<f64> = (0..50).map(|i| -0.2 * i as f64 + crate::rng::next_normal(&mut rng)).collect();
        let fit = pava_non_increasing(&y);
        for w in fit.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // pooled means preserve the total
        let sy: f64 = y.iter().sum();
        let sf: f64 = fit.iter().sum();
        assert!((sy - sf).abs() < 1e-9);
    }
}
