use super::dist::t_two_sided_p;
use super::{EffectSizeKind, StatTestResult, TestKind};
use crate::model::ReferenceStats;
use crate::scoring::{mean, sample_sd};
use crate::{Error, Result};

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Paired t-test on `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64], alpha: f64) -> Result<StatTestResult> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::contract("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if is_constant(&d) {
        return Err(Error::ZeroVariance("differences"));
    }
    let n = d.len() as f64;
    let (m, sd) = (mean(&d), sample_sd(&d));
    let t = m / (sd / n.sqrt());
    let df = n - 1.0;
    Ok(StatTestResult::new(
        TestKind::PairedT,
        t,
        t_two_sided_p(t, df),
        alpha,
        "two-sided; Student t distribution",
    )
    .with_df(df)
    .with_effect(EffectSizeKind::CohensD, m / sd))
}

/// One-sample t-test of `sample` against the benchmark mean `mu`.
pub fn one_sample_t_test(sample: &[f64], mu: f64, alpha: f64) -> Result<StatTestResult> {
    if sample.len() < 2 {
        return Err(Error::contract("one-sample t-test needs at least 2 values"));
    }
    if is_constant(sample) {
        return Err(Error::ZeroVariance("sample"));
    }
    let n = sample.len() as f64;
    let (m, sd) = (mean(sample), sample_sd(sample));
    let t = (m - mu) / (sd / n.sqrt());
    let df = n - 1.0;
    Ok(StatTestResult::new(
        TestKind::OneSampleT,
        t,
        t_two_sided_p(t, df),
        alpha,
        "two-sided; Student t distribution against benchmark mean",
    )
    .with_df(df)
    .with_effect(EffectSizeKind::CohensD, (m - mu) / sd))
}

/// Welch's unequal-variance t-test of `sample` against reference summary statistics.
pub fn welch_t_test(
    sample: &[f64],
    reference: &ReferenceStats,
    alpha: f64,
) -> Result<StatTestResult> {
    if sample.len() < 2 || reference.n < 2 {
        return Err(Error::contract("Welch t-test needs n >= 2 on both sides"));
    }
    let n1 = sample.len() as f64;
    let n2 = reference.n as f64;
    let (m1, s1) = (mean(sample), sample_sd(sample));
    let s1 = if is_constant(sample) { 0.0 } else { s1 };
    let s2 = reference.sd;
    let v1 = s1 * s1 / n1;
    let v2 = s2 * s2 / n2;
    if v1 + v2 == 0.0 {
        return Err(Error::ZeroVariance("sample and reference"));
    }
    let t = (m1 - reference.mean) / (v1 + v2).sqrt();
    let df = (v1 + v2).powi(2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    let pooled = ((s1 * s1 + s2 * s2) / 2.0).sqrt();
    Ok(StatTestResult::new(
        TestKind::WelchT,
        t,
        t_two_sided_p(t, df),
        alpha,
        "two-sided; Welch-Satterthwaite degrees of freedom",
    )
    .with_df(df)
    .with_effect(EffectSizeKind::CohensD, (m1 - reference.mean) / pooled))
}
