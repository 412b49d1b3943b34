//! Rank-based tests: Wilcoxon signed-rank (paired) and Mann-Whitney U
//! (independent). Small samples use exact null distributions; larger ones a
//! tie-corrected normal approximation with continuity correction.
//!
//! Ranks are carried doubled (`2 * average rank`) so tied ranks stay integral
//! and the exact tail comparisons involve no floating point.

use super::dist::normal_two_sided_p;
use super::{EffectSizeKind, StatTestResult, TestKind};
use crate::model::AnalysisConfig;
use crate::{Error, Result};

/// Largest sample handled exactly regardless of configuration; keeps counts in `u128`.
const EXACT_HARD_LIMIT: usize = 100;

/// Doubled average ranks of `values` (1-based), plus the sizes of tie groups.
fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 averaged, doubled
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        if j > i {
            ties.push((j - i + 1) as u64);
        }
        i = j + 1;
    }
    (ranks, ties)
}

fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Number of sign assignments giving each doubled positive-rank sum.
pub fn wilcoxon_signed_rank_distribution(doubled: &[u64]) -> Vec<u128> {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Wilcoxon signed-rank test on paired differences `x - y`; zero differences are dropped.
pub fn wilcoxon_signed_rank(
    x: &[f64],
    y: &[f64],
    config: &AnalysisConfig,
) -> Result<StatTestResult> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if d.is_empty() {
        return Err(Error::NoNonzeroPairs);
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let total2: u64 = ranks.iter().sum();
    let w2: u64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| *r)
        .sum();
    let statistic = w2 as f64 / 2.0;
    let effect = (2.0 * w2 as f64 - total2 as f64) / total2 as f64;

    let (p, note) = if n <= config.exact_test_cutoff.min(EXACT_HARD_LIMIT) {
        let counts = wilcoxon_signed_rank_distribution(&ranks);
        let observed = (2 * w2).abs_diff(total2);
        let extreme: u128 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (2 * *s as u64).abs_diff(total2) >= observed)
            .map(|(_, c)| *c)
            .sum();
        let p = extreme as f64 / 2f64.powi(n as i32);
        (
            p,
            format!("exact null distribution over 2^{n} sign assignments"),
        )
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
        (
            normal_two_sided_p(z),
            format!("normal approximation (n = {n}), tie-corrected, continuity-corrected"),
        )
    };
    Ok(StatTestResult::new(
        TestKind::WilcoxonSignedRank,
        statistic,
        p,
        config.alpha,
        note,
    )
    .with_effect(EffectSizeKind::RankBiserial, effect))
}

/// Null distribution of U (number of (x, y) pairs with x > y) for tie-free
/// samples of sizes `m` and `n`, as counts over the C(m+n, m) arrangements.
pub fn mann_whitney_u_distribution(m: usize, n: usize) -> Vec<u128> {
    // table[j] holds the distribution for (i, j) while sweeping i upward
    let mut table: Vec<Vec<u128>> = (0..=n).map(|_| vec![1u128]).collect();
    for i in 1..=m {
        let mut next: Vec<Vec<u128>> = Vec::with_capacity(n + 1);
        next.push(vec![1u128]);
        for j in 1..=n {
            let mut dist = vec![0u128; i * j + 1];
            // largest value from x: beats all j values of y
            for (u, c) in table[j].iter().enumerate() {
                dist[u + j] += c;
            }
            // largest value from y: contributes nothing
            for (u, c) in next[j - 1].iter().enumerate() {
                dist[u] += c;
            }
            next.push(dist);
        }
        table = next;
    }
    table.pop().expect("n + 1 entries")
}

/// Mann-Whitney U test; the statistic is U for `x`.
pub fn mann_whitney_u(x: &[f64], y: &[f64], config: &AnalysisConfig) -> Result<StatTestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::contract("Mann-Whitney U needs two nonempty samples"));
    }
    let (m, n) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let rx2: u64 = ranks[..m].iter().sum();
    let u2 = rx2 - (m * (m + 1)) as u64;
    let u = u2 as f64 / 2.0;
    let mn = (m * n) as f64;
    let effect = 2.0 * u / mn - 1.0;

    let exact = ties.is_empty() && m + n <= config.exact_test_cutoff.min(EXACT_HARD_LIMIT);
    let (p, note) = if exact {
        let counts = mann_whitney_u_distribution(m, n);
        let total: u128 = counts.iter().sum();
        let mn2 = (m * n) as u64;
        let observed = u2.abs_diff(mn2);
        let extreme: u128 = counts
            .iter()
            .enumerate()
            .filter(|(k, _)| (2 * *k as u64).abs_diff(mn2) >= observed)
            .map(|(_, c)| *c)
            .sum();
        (
            extreme as f64 / total as f64,
            format!(
                "exact null distribution over C({}, {m}) arrangements",
                m + n
            ),
        )
    } else {
        let big_n = (m + n) as f64;
        let var = mn / 12.0 * ((big_n + 1.0) - tie_term(&ties) / (big_n * (big_n - 1.0)));
        let p = if var <= 0.0 {
            1.0
        } else {
            let z = ((u - mn / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
            normal_two_sided_p(z)
        };
        let why = if ties.is_empty() {
            ""
        } else {
            ", tie-corrected"
        };
        (
            p,
            format!("normal approximation (n = {m} + {n}){why}, continuity-corrected"),
        )
    };
    Ok(
        StatTestResult::new(TestKind::MannWhitneyU, u, p, config.alpha, note)
            .with_effect(EffectSizeKind::RankBiserial, effect),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AnalysisConfig {
        AnalysisConfig::default()
    }

    #[test]
    fn ranks_average_ties() {
        let (r, t) = doubled_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, [7, 2, 7, 4]);
        assert_eq!(t, [2]);
    }

    #[test]
    fn five_positive_differences() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&x, &[0.0; 5], &cfg()).unwrap();
        assert_eq!(r.statistic, 15.0);
        assert_eq!(r.p_value, 0.0625);
        assert!(r.method_note.starts_with("exact"));
    }

    #[test]
    fn single_pair_is_p_one() {
        let r = wilcoxon_signed_rank(&[3.0], &[1.0], &cfg()).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn all_zero_differences() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0], &cfg()),
            Err(Error::NoNonzeroPairs)
        ));
    }

    #[test]
    fn wilcoxon_normal_matches_scipy() {
        // scipy.stats.wilcoxon(xs, ys, method='approx', correction=True)
        let xs = [
            5.1, 3.2, 6.0, 4.4, 5.5, 2.9, 4.8, 6.3, 5.0, 3.9, 4.1, 5.7, 6.6, 3.5, 4.9, 5.2, 2.8,
            4.6, 5.9, 6.1, 3.3, 4.0, 5.4, 4.7, 6.2, 3.8, 5.3, 4.2, 5.8, 3.6,
        ];
        let ys = [
            4.0, 3.5, 5.1, 4.9, 4.2, 3.3, 4.1, 5.0, 4.4, 4.3, 3.2, 4.6, 5.5, 3.9, 4.0, 4.7, 3.1,
            4.8, 4.9, 5.6, 3.4, 3.3, 4.5, 4.1, 5.2, 4.0, 4.6, 3.7, 4.8, 3.3,
        ];
        let r = wilcoxon_signed_rank(&xs, &ys, &cfg()).unwrap();
        assert!(r.method_note.starts_with("normal"));
        assert!(
            (r.p_value - 0.0001946766379542757).abs() < 1e-9,
            "{}",
            r.p_value
        );
    }

    #[test]
    fn normal_approximation_close_to_exact_at_cutoff() {
        let x = [
            2.1, -0.4, 1.3, 0.7, 2.9, -1.6, 0.2, 1.8, 3.4, -0.9, 1.1, 2.5,
        ];
        let zeros = [0.0; 12];
        let exact = wilcoxon_signed_rank(&x, &zeros, &cfg()).unwrap();
        let approx_cfg = AnalysisConfig {
            exact_test_cutoff: 0,
            ..cfg()
        };
        let approx = wilcoxon_signed_rank(&x, &zeros, &approx_cfg).unwrap();
        assert!(exact.method_note.starts_with("exact"));
        assert!(approx.method_note.starts_with("normal"));
        assert!(
            (exact.p_value - approx.p_value).abs() < 0.01,
            "{} vs {}",
            exact.p_value,
            approx.p_value
        );
    }

    #[test]
    fn mwu_two_by_two() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], &cfg()).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mwu_identical_multisets_p_one() {
        let x = [3.0, 4.0, 4.0, 5.0, 6.0, 2.0, 4.0];
        let r = mann_whitney_u(&x, &x, &cfg()).unwrap();
        assert_eq!(r.p_value, 1.0);
        let flat = [4.0; 5];
        assert_eq!(mann_whitney_u(&flat, &flat, &cfg()).unwrap().p_value, 1.0);
    }

    #[test]
    fn mwu_tied_likert_matches_scipy() {
        // scipy.stats.mannwhitneyu(a, b, method='asymptotic', use_continuity=True)
        let a = [
            4., 5., 5., 6., 3., 4., 5., 6., 7., 5., 4., 4., 5., 6., 5., 3., 4., 5., 6., 6.,
        ];
        let b = [
            3., 4., 4., 5., 3., 4., 4., 5., 5., 4., 3., 4., 2., 5., 4., 3., 4., 4., 5., 3.,
        ];
        let r = mann_whitney_u(&a, &b, &cfg()).unwrap();
        assert_eq!(r.statistic, 302.0);
        assert!(
            (r.p_value - 0.004273170721552143).abs() < 1e-9,
            "{}",
            r.p_value
        );
        assert!(r.method_note.contains("tie-corrected"));
    }

    #[test]
    fn distributions_sum_to_total() {
        let counts = mann_whitney_u_distribution(4, 6);
        assert_eq!(counts.iter().sum::<u128>(), 210);
        assert_eq!(counts.len(), 25);
        let w = wilcoxon_signed_rank_distribution(&[2, 4, 6, 8, 10, 12, 14]);
        assert_eq!(w.iter().sum::<u128>(), 128);
    }
}
