use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::TestKind;
use crate::model::{Bands, BenchmarkSpec, StudyDesign, StudyMode};
use crate::{Error, Result};

/// Tests to run on one measure (`INSTRUMENT/subscale` or a knowledge-gain delta).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedMeasure {
    pub measure: String,
    pub tests: Vec<TestKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPlan {
    pub mode: StudyMode,
    pub measures: Vec<PlannedMeasure>,
}

impl TestPlan {
    pub fn tests_for(&self, measure: &str) -> &[TestKind] {
        self.measures
            .iter()
            .find(|m| m.measure == measure)
            .map(|m| m.tests.as_slice())
            .unwrap_or(&[])
    }
}

/// Chooses tests per measure: within-subject tests when two interfaces were
/// used by the same participants, benchmark tests otherwise.
pub fn build_test_plan(
    design: &StudyDesign,
    measures: &[String],
    benchmark: Option<&BenchmarkSpec>,
) -> Result<TestPlan> {
    let planned = match design.mode {
        StudyMode::Comparative => measures
            .iter()
            .map(|m| PlannedMeasure {
                measure: m.clone(),
                tests: vec![TestKind::PairedT, TestKind::WilcoxonSignedRank],
            })
            .collect(),
        StudyMode::BenchmarkOnly => {
            let spec = benchmark.ok_or(Error::MissingBenchmark)?;
            let empty = Default::default();
            measures
                .iter()
                .map(|m| {
                    let entry = spec.measures.get(m).unwrap_or(&empty);
                    let mut tests = Vec::new();
                    if entry.mu.is_some() {
                        tests.push(TestKind::OneSampleT);
                    }
                    if entry.reference.is_some() || entry.sample.is_some() {
                        tests.push(TestKind::WelchT);
                    }
                    if entry.sample.is_some() {
                        tests.push(TestKind::MannWhitneyU);
                    }
                    PlannedMeasure {
                        measure: m.clone(),
                        tests,
                    }
                })
                .collect()
        }
    };
    Ok(TestPlan {
        mode: design.mode,
        measures: planned,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAssignment {
    pub label: String,
    pub clamped: bool,
    pub method_note: String,
}

/// Label of the half-open band `[edge_i, edge_i+1)` containing `mean`. Means
/// outside every band are clamped to the nearest end band.
pub fn benchmark_band(mean: f64, bands: &Bands) -> Result<BandAssignment> {
    if let Some(problem) = bands.problems().into_iter().next() {
        return Err(Error::contract(problem));
    }
    let edges = &bands.edges;
    let last = bands.labels.len() - 1;
    let (idx, clamped) = if mean < edges[0] {
        (0, true)
    } else if mean >= edges[edges.len() - 1] {
        (last, true)
    } else {
        (edges.partition_point(|e| *e <= mean) - 1, false)
    };
    let method_note = if clamped {
        format!(
            "mean {mean} outside [{}, {}); clamped to nearest band",
            edges[0],
            edges[edges.len() - 1]
        )
    } else {
        "half-open band [lower, upper)".to_owned()
    };
    Ok(BandAssignment {
        label: bands.labels[idx].clone(),
        clamped,
        method_note,
    })
}

/// Convenience lookup used by the report: bands per measure.
pub(crate) fn bands_by_measure(spec: &BenchmarkSpec) -> BTreeMap<&str, &Bands> {
    spec.measures
        .iter()
        .filter_map(|(k, e)| e.bands.as_ref().map(|b| (k.as_str(), b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BenchmarkEntry, ReferenceStats};
    use crate::testutil::comparative_design;

    fn bands() -> Bands {
        Bands {
            edges: vec![-3.0, -0.8, 0.8, 3.0],
            labels: vec!["negative".into(), "neutral".into(), "positive".into()],
        }
    }

    #[test]
    fn band_lookup() {
        let b = bands();
        let low = benchmark_band(-3.5, &b).unwrap();
        assert_eq!(low.label, "negative");
        assert!(low.clamped);
        let at_cut = benchmark_band(0.8, &b).unwrap();
        assert_eq!(at_cut.label, "positive");
        assert!(!at_cut.clamped);
        assert_eq!(benchmark_band(0.0, &b).unwrap().label, "neutral");
        assert!(benchmark_band(3.0, &b).unwrap().clamped);
    }

    #[test]
    fn comparative_plan_is_dependent_only() {
        let design = comparative_design();
        let plan = build_test_plan(&design, &["PSSUQ/OVERALL".into()], None).unwrap();
        assert!(plan
            .measures
            .iter()
            .flat_map(|m| &m.tests)
            .all(|t| t.is_dependent()));
        assert_eq!(plan.tests_for("PSSUQ/OVERALL").len(), 2);
    }

    #[test]
    fn benchmark_plans() {
        let mut design = comparative_design();
        design.mode = StudyMode::BenchmarkOnly;
        design.conditions.truncate(1);
        let measures = vec!["A/x".to_string(), "A/y".to_string(), "A/z".to_string()];
        assert!(matches!(
            build_test_plan(&design, &measures, None),
            Err(Error::MissingBenchmark)
        ));

        let mut spec = BenchmarkSpec::default();
        spec.measures.insert(
            "A/x".into(),
            BenchmarkEntry {
                mu: Some(4.0),
                ..Default::default()
            },
        );
        spec.measures.insert(
            "A/y".into(),
            BenchmarkEntry {
                reference: Some(ReferenceStats {
                    mean: 4.0,
                    sd: 1.0,
                    n: 30,
                }),
                ..Default::default()
            },
        );
        spec.measures.insert(
            "A/z".into(),
            BenchmarkEntry {
                sample: Some(vec![1.0, 2.0]),
                ..Default::default()
            },
        );
        let plan = build_test_plan(&design, &measures, Some(&spec)).unwrap();
        assert_eq!(plan.tests_for("A/x"), [TestKind::OneSampleT]);
        assert_eq!(plan.tests_for("A/y"), [TestKind::WelchT]);
        assert_eq!(
            plan.tests_for("A/z"),
            [TestKind::WelchT, TestKind::MannWhitneyU]
        );
        assert!(plan
            .measures
            .iter()
            .flat_map(|m| &m.tests)
            .all(|t| !t.is_dependent()));
    }
}
