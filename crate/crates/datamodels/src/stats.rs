//! Shared scalar statistics: correlation coefficients, rank statistics, the
//! D'Agostino K-squared normality test, and small hypothesis-test helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (ddof = 1) sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Pearson correlation; NaN when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks (1-based); ties share the mean of their rank range.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("NaN in ranked data"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// AUC of `score` as a classifier of the binary `label` (1.0 = positive),
/// computed from the Mann-Whitney rank statistic with tie correction.
/// Returns None when one class is absent.
pub fn auc(score: &[f64], label: &[f64]) -> Option<f64> {
    assert_eq!(score.len(), label.len());
    let n_pos = label.iter().filter(|&&l| l > 0.5).count();
    let n_neg = label.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = average_ranks(score);
    let rank_sum: f64 = ranks
        .iter()
        .zip(label)
        .filter(|(_, &l)| l > 0.5)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// p-value of a chi-square goodness-of-fit test of `counts` against uniform.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let k = counts.len();
    assert!(k >= 2);
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("df >= 1");
    1.0 - dist.cdf(stat)
}

/// Result of the D'Agostino K-squared normality test.
#[derive(Debug, Clone, Copy)]
pub struct NormalityTest {
    pub statistic: f64,
    pub p_value: f64,
    /// All samples identical: the test is undefined and the output channel
    /// is saturated.
    pub saturated: bool,
}

/// D'Agostino-Pearson K-squared omnibus normality test (skewness + kurtosis
/// transforms, K^2 ~ chi-squared with 2 df). Requires n >= 20.
pub fn dagostino_k2(xs: &[f64]) -> NormalityTest {
    let n = xs.len();
    assert!(n >= 20, "K^2 test needs at least 20 samples, got {n}");
    let nf = n as f64;
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 <= 0.0 {
        return NormalityTest { statistic: f64::INFINITY, p_value: 0.0, saturated: true };
    }
    let g1 = m3 / m2.powf(1.5);
    let b2 = m4 / (m2 * m2);

    // Skewness: D'Agostino (1970) transform to approximate normality.
    let y = g1 * ((nf + 1.0) * (nf + 3.0) / (6.0 * (nf - 2.0))).sqrt();
    let beta2 = 3.0 * (nf * nf + 27.0 * nf - 70.0) * (nf + 1.0) * (nf + 3.0)
        / ((nf - 2.0) * (nf + 5.0) * (nf + 7.0) * (nf + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let ya = y / alpha;
    let z1 = delta * (ya + (ya * ya + 1.0).sqrt()).ln();

    // Kurtosis: Anscombe & Glynn (1983) transform.
    let eb2 = 3.0 * (nf - 1.0) / (nf + 1.0);
    let vb2 = 24.0 * nf * (nf - 2.0) * (nf - 3.0) / ((nf + 1.0).powi(2) * (nf + 3.0) * (nf + 5.0));
    let x = (b2 - eb2) / vb2.sqrt();
    let sqrt_beta1 = 6.0 * (nf * nf - 5.0 * nf + 2.0) / ((nf + 7.0) * (nf + 9.0))
        * (6.0 * (nf + 3.0) * (nf + 5.0) / (nf * (nf - 2.0) * (nf - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    // cbrt keeps the transform defined when the base goes negative
    let z2 = ((1.0 - 2.0 / (9.0 * a)) - ((1.0 - 2.0 / a) / denom).cbrt()) / (2.0 / (9.0 * a)).sqrt();

    let k2 = z1 * z1 + z2 * z2;
    // survival of chi-squared with 2 df
    let p = (-k2 / 2.0).exp();
    NormalityTest { statistic: k2, p_value: p.clamp(0.0, 1.0), saturated: false }
}

/// Kolmogorov-Smirnov distance between the empirical distribution of `xs`
/// (values in [0,1]) and the uniform distribution.
pub fn ks_distance_uniform(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((x - lo).abs()).max((hi - x).abs());
    }
    d
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    for i in 0..n {
        table[a[i] * kb + b[i]] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().map(|&x| c2(x)).sum();
    let sum_a: f64 = ra.iter().map(|&x| c2(x)).sum();
    let sum_b: f64 = rb.iter().map(|&x| c2(x)).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((pearson(&x, &y) - 1.0).abs() < 1e-12);
        let yneg = [-2.0, -4.0, -6.0, -8.0];
        assert!((pearson(&x, &yneg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_ties_average_rank() {
        let x = [1.0, 1.0, 2.0];
        let r = average_ranks(&x);
        assert_eq!(r, vec![1.5, 1.5, 3.0]);
        let y = [5.0, 5.0, 9.0];
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_perfect_and_chance() {
        let s = [0.1, 0.2, 0.8, 0.9];
        let l = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(auc(&s, &l), Some(1.0));
        let l2 = [1.0, 0.0, 0.0, 1.0];
        assert!((auc(&s, &l2).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(auc(&s, &[1.0; 4]), None);
    }

    // AUC via rank statistic equals AUC via explicit threshold sweep.
    #[test]
    fn auc_rank_equals_threshold_sweep() {
        let score = [0.3, 0.1, 0.4, 0.4, 0.9, 0.2, 0.7, 0.4];
        let label = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let by_rank = auc(&score, &label).unwrap();
        // trapezoidal sweep over all distinct thresholds
        let mut pairs_correct = 0.0;
        let mut pairs = 0.0;
        for i in 0..score.len() {
            for j in 0..score.len() {
                if label[i] > 0.5 && label[j] < 0.5 {
                    pairs += 1.0;
                    if score[i] > score[j] {
                        pairs_correct += 1.0;
                    } else if score[i] == score[j] {
                        pairs_correct += 0.5;
                    }
                }
            }
        }
        assert!((by_rank - pairs_correct / pairs).abs() < 1e-12);
    }

    #[test]
    fn k2_matches_scipy_reference() {
        // scipy.stats.normaltest on this vector: k2 = 0.040623512255,
        // p = 0.979893137993 (frozen from the reference implementation).
        let x = [
            0.00123, 0.298746, -0.274138, -0.890592, -0.454671, -0.991647, 0.060144, 1.340215,
            -0.492207, -0.620475, 0.489842, 0.356887, 0.105414, -0.930468, -0.029252, 0.695303,
            -1.344215, -0.457616, -1.901223, -1.289538, -1.841735, -0.235091, -1.267446, 0.271264,
        ];
        let t = dagostino_k2(&x);
        assert!((t.statistic - 0.040623512255).abs() < 1e-9, "{}", t.statistic);
        assert!((t.p_value - 0.979893137993).abs() < 1e-9, "{}", t.p_value);
        assert!(!t.saturated);
    }

    #[test]
    fn k2_saturates_on_constant_input() {
        let t = dagostino_k2(&[3.0; 25]);
        assert!(t.saturated);
        assert_eq!(t.p_value, 0.0);
    }

    #[test]
    fn chi_square_uniform_sane() {
        // perfectly uniform counts: p ~ 1
        assert!(chi_square_uniform_p(&[100, 100, 100, 100]) > 0.99);
        // grossly non-uniform: p ~ 0
        assert!(chi_square_uniform_p(&[400, 0, 0, 0]) < 1e-6);
    }

    #[test]
    fn ks_distance_basics() {
        // point mass at 0.5 vs uniform: D = 0.5
        assert!((ks_distance_uniform(&[0.5; 100]) - 0.5).abs() < 0.01);
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance_uniform(&grid) < 0.002);
    }

    #[test]
    fn ari_identity_and_permuted_labels() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [1, 1, 2, 2, 0, 0];
        assert!((adjusted_rand_index(&a, &b) - 1.0).abs() < 1e-12);
        let c = [0, 1, 0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &c) < 0.2);
    }
}
