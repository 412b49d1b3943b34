//! Significance tests and the dependent/independent test-selection protocol.
//!
//! Every test is two-sided. Parametric and rank-based companions are both
//! run so that disagreements can be surfaced rather than silently resolved.

pub mod dist;
mod parametric;
mod plan;
mod rank;

use serde::{Deserialize, Serialize};

pub use parametric::{one_sample_t_test, paired_t_test, welch_t_test};
pub(crate) use plan::bands_by_measure;
pub use plan::{benchmark_band, build_test_plan, BandAssignment, PlannedMeasure, TestPlan};
pub use rank::{
    mann_whitney_u, mann_whitney_u_distribution, wilcoxon_signed_rank,
    wilcoxon_signed_rank_distribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    WilcoxonSignedRank,
    OneSampleT,
    WelchT,
    MannWhitneyU,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::PairedT => "paired t-test",
            TestKind::WilcoxonSignedRank => "Wilcoxon signed-rank",
            TestKind::OneSampleT => "one-sample t-test",
            TestKind::WelchT => "Welch t-test",
            TestKind::MannWhitneyU => "Mann-Whitney U",
        }
    }

    pub fn is_parametric(self) -> bool {
        matches!(
            self,
            TestKind::PairedT | TestKind::OneSampleT | TestKind::WelchT
        )
    }

    /// Within-subject (dependent) test.
    pub fn is_dependent(self) -> bool {
        matches!(self, TestKind::PairedT | TestKind::WilcoxonSignedRank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSizeKind {
    CohensD,
    RankBiserial,
}

/// Effect size reported alongside a test. Descriptive only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub kind: EffectSizeKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_size: Option<EffectSize>,
    pub significant: bool,
    pub method_note: String,
}

impl StatTestResult {
    fn new(
        test: TestKind,
        statistic: f64,
        p_value: f64,
        alpha: f64,
        note: impl Into<String>,
    ) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        StatTestResult {
            test,
            statistic,
            p_value,
            df: None,
            effect_size: None,
            significant: p_value < alpha,
            method_note: note.into(),
        }
    }

    fn with_df(mut self, df: f64) -> Self {
        self.df = Some(df);
        self
    }

    fn with_effect(mut self, kind: EffectSizeKind, value: f64) -> Self {
        self.effect_size = Some(EffectSize { kind, value });
        self
    }
}
