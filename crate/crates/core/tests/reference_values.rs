//! Frozen scipy values (`tests/oracles/scipy_reference.py`).

mod common;

use iecsi::model::{AnalysisConfig, ReferenceStats};
use iecsi::stats::{self, dist};

fn close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "{got} vs {want}");
}

#[test]
fn normal_cdf() {
    for (z, p) in [
        (-3.0, 0.0013498980316300933),
        (-1.96, 0.024997895148220435),
        (-0.5, 0.3085375387259869),
        (0.0, 0.5),
        (0.3, 0.6179114221889526),
        (1.0, 0.8413447460685429),
        (2.5, 0.9937903346742238),
        (5.0, 0.9999997133484281),
    ] {
        close(dist::normal_cdf(z), p, 1e-15);
    }
}

#[test]
fn t_grid() {
    for (t, df, p) in common::T_GRID {
        close(dist::t_two_sided_p(t, df), p, 1e-12);
    }
}

#[test]
fn t_tests() {
    let r = stats::paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], 0.05).unwrap();
    close(r.statistic, 3.464101615137755, 1e-12);
    close(r.p_value, 0.07417990022744853, 1e-12);

    let r = stats::one_sample_t_test(&[4.0, 5.0, 6.0], 4.0, 0.05).unwrap();
    close(r.statistic, 1.7320508075688774, 1e-12);
    close(r.p_value, 0.22540333075851657, 1e-12);

    let x = [5.0, 6.0, 4.0, 5.0, 7.0, 6.0, 5.0, 4.0, 6.0, 5.0];
    let reference = ReferenceStats {
        mean: 4.2,
        sd: 1.1,
        n: 40,
    };
    let r = stats::welch_t_test(&x, &reference, 0.05).unwrap();
    close(r.statistic, 3.172123904006597, 1e-12);
    close(r.p_value, 0.006043514724216256, 1e-12);
}

#[test]
fn rank_tests_normal_approximation() {
    let cfg = AnalysisConfig::default();
    let a = [
        4., 5., 5., 6., 3., 4., 5., 6., 7., 5., 4., 4., 5., 6., 5., 3., 4., 5., 6., 6.,
    ];
    let b = [
        3., 4., 4., 5., 3., 4., 4., 5., 5., 4., 3., 4., 2., 5., 4., 3., 4., 4., 5., 3.,
    ];
    let r = stats::mann_whitney_u(&a, &b, &cfg).unwrap();
    assert_eq!(r.statistic, 302.0);
    close(r.p_value, 0.004273170721552143, 1e-12);

    let xs = [
        5.1, 3.2, 6.0, 4.4, 5.5, 2.9, 4.8, 6.3, 5.0, 3.9, 4.1, 5.7, 6.6, 3.5, 4.9, 5.2, 2.8, 4.6,
        5.9, 6.1, 3.3, 4.0, 5.4, 4.7, 6.2, 3.8, 5.3, 4.2, 5.8, 3.6,
    ];
    let ys = [
        4.0, 3.5, 5.1, 4.9, 4.2, 3.3, 4.1, 5.0, 4.4, 4.3, 3.2, 4.6, 5.5, 3.9, 4.0, 4.7, 3.1, 4.8,
        4.9, 5.6, 3.4, 3.3, 4.5, 4.1, 5.2, 4.0, 4.6, 3.7, 4.8, 3.3,
    ];
    let r = stats::wilcoxon_signed_rank(&xs, &ys, &cfg).unwrap();
    close(r.p_value, 0.0001946766379542757, 1e-12);
}
