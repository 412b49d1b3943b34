//! End-to-end analysis of a study and its rendering.
//!
//! [`analyze`] runs scoring, then qualitative annotation, then significance
//! tests, then knowledge gain. The result holds no timestamps and uses only
//! ordered collections, so rendering the same study twice gives the same bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::instruments::{Instrument, InstrumentRegistry, KG};
use crate::knowledge_gain::{cohort_gain, CohortGain};
use crate::model::{
    AnalysisConfig, BenchmarkSpec, InterfaceCondition, Phase, RatingDimension, ReferenceStats,
    Sentiment, Session, Study, StudyMode, ViolationKind,
};
use crate::qualitative::{annotate_mean, tally_sections, Annotation, SectionTally};
use crate::scoring::{
    docs_viewed_average, participant_scores, sample_sd, subscale_scores, to_response_scale,
    DimensionScore, Respondent,
};
use crate::stats::{
    benchmark_band, build_test_plan, mann_whitney_u, one_sample_t_test, paired_t_test,
    welch_t_test, wilcoxon_signed_rank, BandAssignment, StatTestResult, TestKind, TestPlan,
};
use crate::storage::canonical_json;
use crate::{Error, Result, GENERATOR};

/// Prefix of knowledge-gain measures, e.g. `KG/delta_dqual`.
pub const KG_MEASURE_PREFIX: &str = "KG/delta_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Structured,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" | "json" => Ok(ReportFormat::Structured),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown format `{other}` (structured|markdown)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLevel {
    Subscale,
    Item,
}

/// Sentiment of one subscale or item mean, taken on the response scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAnnotation {
    pub instrument_id: String,
    pub level: TargetLevel,
    pub id: String,
    pub mean: f64,
    pub sentiment: Sentiment,
}

impl TargetAnnotation {
    fn key(&self) -> String {
        let level = match self.level {
            TargetLevel::Subscale => "subscale",
            TargetLevel::Item => "item",
        };
        format!("{}/{level}/{}", self.instrument_id, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureBand {
    pub measure: String,
    pub mean: f64,
    #[serde(flatten)]
    pub band: BandAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: String,
    pub sessions: usize,
    pub finished_sessions: usize,
    /// `None` when the condition has no sessions yet.
    pub docs_viewed_average: Option<f64>,
    pub scores: Vec<DimensionScore>,
    /// Subscales (`INSTRUMENT/subscale`) left unscored because a member item has no responses.
    pub unscored: Vec<String>,
    pub annotations: Vec<TargetAnnotation>,
    pub section_tallies: Vec<SectionTally>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub benchmark_bands: Vec<MeasureBand>,
}

impl ConditionReport {
    pub fn score(&self, measure: &str) -> Option<&DimensionScore> {
        self.scores
            .iter()
            .find(|s| measure_id(&s.instrument_id, &s.subscale_id) == measure)
    }

    pub fn flagged_sections(&self) -> impl Iterator<Item = &str> {
        self.section_tallies
            .iter()
            .filter(|t| t.flagged_for_improvement)
            .map(|t| t.section.as_str())
    }
}

/// Outcome of one planned test; exactly one of `result` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test: TestKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<StatTestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureTests {
    pub measure: String,
    /// Paired observations (comparative) or sample size (benchmark).
    pub n: usize,
    pub tests: Vec<TestOutcome>,
    /// Parametric and rank-based tests disagree on significance at alpha.
    pub disagreement: bool,
}

impl MeasureTests {
    pub fn result(&self, test: TestKind) -> Option<&StatTestResult> {
        self.tests
            .iter()
            .find(|t| t.test == test)
            .and_then(|t| t.result.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub generator: String,
    pub study_id: String,
    pub mode: StudyMode,
    /// False while any session has not reached the post-search questionnaire.
    pub complete: bool,
    pub config: AnalysisConfig,
    pub conditions: Vec<InterfaceCondition>,
    pub instruments: Vec<String>,
    pub condition_results: Vec<ConditionReport>,
    pub test_plan: TestPlan,
    pub tests: Vec<MeasureTests>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_gain: Option<CohortGain>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AnalysisReport {
    pub fn condition(&self, condition_id: &str) -> Option<&ConditionReport> {
        self.condition_results
            .iter()
            .find(|c| c.condition_id == condition_id)
    }

    pub fn measure_tests(&self, measure: &str) -> Option<&MeasureTests> {
        self.tests.iter().find(|m| m.measure == measure)
    }
}

pub fn measure_id(instrument_id: &str, subscale_id: &str) -> String {
    format!("{instrument_id}/{subscale_id}")
}

fn kg_measure(d: RatingDimension) -> String {
    format!("{KG_MEASURE_PREFIX}{}", d.name())
}

/// Analyzes a study with the configuration stored in its design.
pub fn analyze(study: &Study) -> Result<AnalysisReport> {
    analyze_with(study, &study.design.analysis)
}

/// Analyzes a study under `config`, which replaces the design's configuration.
pub fn analyze_with(study: &Study, config: &AnalysisConfig) -> Result<AnalysisReport> {
    let registry = study.registry();
    let mut validation = study.validate(&registry);
    for problem in config.problems() {
        validation.push(ViolationKind::InvalidConfig, "analysis config", problem);
    }
    if study.sessions.is_empty() {
        validation.push(
            ViolationKind::NoSessions,
            "study",
            "study has no sessions to analyze",
        );
    }
    validation.into_result()?;

    let design = &study.design;
    let benchmark = study.benchmark();
    if design.mode == StudyMode::BenchmarkOnly && benchmark.is_none() {
        return Err(Error::MissingBenchmark);
    }
    let instruments = registry.report_order(&design.instruments);
    let complete = study.sessions.iter().all(|s| s.state.is_finished())
        && design.conditions.iter().all(|c| {
            study
                .sessions
                .iter()
                .any(|s| s.condition_id == c.condition_id)
        });
    let mut notes = Vec::new();
    if !complete {
        notes.push(
            "data collection incomplete; results cover the responses received so far".to_owned(),
        );
    }

    // scoring and qualitative annotation, per condition
    let mut condition_results = Vec::new();
    let mut per_participant: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for cond in &design.conditions {
        let sessions: Vec<&Session> = study
            .sessions
            .iter()
            .filter(|s| s.condition_id == cond.condition_id)
            .collect();
        let (result, participants) = condition_report(
            &cond.condition_id,
            &sessions,
            &instruments,
            &registry,
            config,
        )?;
        for (measure, scores) in participants {
            per_participant.insert((cond.condition_id.clone(), measure), scores);
        }
        condition_results.push(result);
    }

    // knowledge gain
    let knowledge_gain = if instruments.iter().any(|i| i == KG) {
        knowledge_gain(study, complete, config, &mut notes)?
    } else {
        None
    };

    // significance tests
    let mut measures: Vec<String> = Vec::new();
    for id in &instruments {
        let Some(inst) = registry.get(id) else {
            continue;
        };
        if !inst.is_likert() {
            continue;
        }
        for (sub, _) in inst.effective_subscales() {
            let m = measure_id(id, &sub);
            if condition_results.iter().all(|c| c.score(&m).is_some()) {
                measures.push(m);
            }
        }
    }
    if knowledge_gain.is_some() {
        measures.extend(RatingDimension::ALL.map(kg_measure));
    }
    let test_plan = build_test_plan(design, &measures, benchmark)?;
    let samples = |cond: &str, measure: &str| -> BTreeMap<String, f64> {
        if let Some(dim) = RatingDimension::ALL
            .into_iter()
            .find(|d| kg_measure(*d) == measure)
        {
            return knowledge_gain
                .as_ref()
                .map(|kg| kg.deltas(cond, dim))
                .unwrap_or_default();
        }
        per_participant
            .get(&(cond.to_owned(), measure.to_owned()))
            .cloned()
            .unwrap_or_default()
    };
    let mut tests = Vec::new();
    for planned in &test_plan.measures {
        let entry = match design.mode {
            StudyMode::Comparative => {
                let a = samples(&design.conditions[0].condition_id, &planned.measure);
                let b = samples(&design.conditions[1].condition_id, &planned.measure);
                let (x, y): (Vec<f64>, Vec<f64>) = a
                    .iter()
                    .filter_map(|(p, v)| b.get(p).map(|w| (*v, *w)))
                    .unzip();
                run_tests(
                    &planned.measure,
                    &planned.tests,
                    x.len(),
                    |test| match test {
                        TestKind::PairedT => paired_t_test(&x, &y, config.alpha),
                        TestKind::WilcoxonSignedRank => wilcoxon_signed_rank(&x, &y, config),
                        other => Err(Error::contract(format!(
                            "{} not planned in comparative mode",
                            other.name()
                        ))),
                    },
                )
            }
            StudyMode::BenchmarkOnly => {
                let spec = benchmark.expect("checked above");
                let sample: Vec<f64> =
                    samples(&design.conditions[0].condition_id, &planned.measure)
                        .into_values()
                        .collect();
                let entry = spec
                    .measures
                    .get(&planned.measure)
                    .cloned()
                    .unwrap_or_default();
                run_tests(
                    &planned.measure,
                    &planned.tests,
                    sample.len(),
                    |test| match test {
                        TestKind::OneSampleT => one_sample_t_test(
                            &sample,
                            entry.mu.expect("planned from mu"),
                            config.alpha,
                        ),
                        TestKind::WelchT => {
                            let reference = match (&entry.reference, &entry.sample) {
                                (Some(r), _) => *r,
                                (None, Some(s)) => ReferenceStats {
                                    mean: crate::scoring::mean(s),
                                    sd: sample_sd(s),
                                    n: s.len(),
                                },
                                (None, None) => unreachable!("planned from reference or sample"),
                            };
                            welch_t_test(&sample, &reference, config.alpha)
                        }
                        TestKind::MannWhitneyU => mann_whitney_u(
                            &sample,
                            entry.sample.as_deref().expect("planned from sample"),
                            config,
                        ),
                        other => Err(Error::contract(format!(
                            "{} not planned in benchmark mode",
                            other.name()
                        ))),
                    },
                )
            }
        };
        tests.push(entry);
    }

    if let Some(spec) = benchmark {
        assign_bands(spec, &mut condition_results, knowledge_gain.as_ref())?;
        let known: BTreeSet<&str> = measures.iter().map(String::as_str).collect();
        for m in spec.measures.keys().filter(|m| !known.contains(m.as_str())) {
            notes.push(format!(
                "benchmark measure `{m}` was not scored in this study"
            ));
        }
    }

    Ok(AnalysisReport {
        generator: GENERATOR.to_owned(),
        study_id: design.study_id.clone(),
        mode: design.mode,
        complete,
        config: config.clone(),
        conditions: design.conditions.clone(),
        instruments,
        condition_results,
        test_plan,
        tests,
        knowledge_gain,
        notes,
    })
}

type ParticipantScores = BTreeMap<String, BTreeMap<String, f64>>;

fn condition_report(
    condition_id: &str,
    sessions: &[&Session],
    instruments: &[String],
    registry: &InstrumentRegistry,
    config: &AnalysisConfig,
) -> Result<(ConditionReport, ParticipantScores)> {
    let mut scores = Vec::new();
    let mut unscored = Vec::new();
    let mut annotations = Vec::new();
    let mut sections = BTreeMap::new();
    let mut participants = BTreeMap::new();
    for id in instruments {
        let inst = registry.get(id).expect("design validated against registry");
        if !inst.is_likert() {
            continue;
        }
        let respondents: Vec<Respondent<'_>> = sessions
            .iter()
            .map(|s| Respondent::from_session(s, id))
            .filter(|r| !r.responses.is_empty())
            .collect();
        let scored = match subscale_scores(&respondents, inst, config) {
            Ok(s) => s,
            Err(Error::EmptySubscale { .. }) if respondents.is_empty() => Vec::new(),
            Err(e) => return Err(e),
        };
        for (sub, _) in inst.effective_subscales() {
            if !scored.iter().any(|s| s.subscale_id == sub) {
                unscored.push(measure_id(id, &sub));
            }
        }
        let by_sub = participant_scores(&respondents, inst, config)?;
        for s in &scored {
            if let Some(p) = by_sub.get(&s.subscale_id) {
                participants.insert(measure_id(id, &s.subscale_id), p.clone());
            }
        }
        annotate_instrument(inst, &scored, config, &mut annotations, &mut sections)?;
        scores.extend(scored);
    }

    let plain: Vec<Annotation> = annotations
        .iter()
        .map(|a: &TargetAnnotation| Annotation {
            target: a.key(),
            sentiment: a.sentiment,
            mean: a.mean,
        })
        .collect();
    let section_tallies = tally_sections(&plain, &sections)?;
    let docs_viewed_average = match docs_viewed_average(sessions) {
        Ok(v) => Some(v),
        Err(Error::NoSessions) => None,
        Err(e) => return Err(e),
    };
    Ok((
        ConditionReport {
            condition_id: condition_id.to_owned(),
            sessions: sessions.len(),
            finished_sessions: sessions.iter().filter(|s| s.state.is_finished()).count(),
            docs_viewed_average,
            scores,
            unscored,
            annotations,
            section_tallies,
            benchmark_bands: Vec::new(),
        },
        participants,
    ))
}

/// Annotates every scored subscale and every item that contributed to one.
fn annotate_instrument(
    inst: &Instrument,
    scored: &[DimensionScore],
    config: &AnalysisConfig,
    out: &mut Vec<TargetAnnotation>,
    sections: &mut BTreeMap<String, String>,
) -> Result<()> {
    let section = if inst.section.is_empty() {
        inst.instrument_id.clone()
    } else {
        inst.section.clone()
    };
    let mut push = |level, id: &str, transformed: f64| -> Result<()> {
        let mean = to_response_scale(transformed, inst.scoring_transform, config);
        let a = TargetAnnotation {
            instrument_id: inst.instrument_id.clone(),
            level,
            id: id.to_owned(),
            mean,
            sentiment: annotate_mean(mean, config)?,
        };
        sections.insert(a.key(), section.clone());
        out.push(a);
        Ok(())
    };
    let mut items: BTreeMap<&str, f64> = BTreeMap::new();
    for s in scored {
        push(TargetLevel::Subscale, &s.subscale_id, s.mean)?;
        items.extend(s.per_item_means.iter().map(|(k, v)| (k.as_str(), *v)));
    }
    // items in declaration order
    for item in &inst.items {
        if let Some(v) = items.get(item.item_id.as_str()) {
            push(TargetLevel::Item, &item.item_id, *v)?;
        }
    }
    Ok(())
}

fn knowledge_gain(
    study: &Study,
    complete: bool,
    config: &AnalysisConfig,
    notes: &mut Vec<String>,
) -> Result<Option<CohortGain>> {
    let doubly_rated = |s: &Session| {
        [Phase::Pre, Phase::Post]
            .iter()
            .all(|p| s.summary(*p).is_some_and(|d| d.ratings.len() == 2))
    };
    let sessions: Vec<&Session> = if complete {
        study.sessions.iter().collect()
    } else {
        study.sessions.iter().filter(|s| doubly_rated(s)).collect()
    };
    if sessions.is_empty() {
        notes.push("knowledge gain not computed: no doubly-rated summary pairs yet".to_owned());
        return Ok(None);
    }
    if !complete && sessions.len() < study.sessions.len() {
        notes.push(format!(
            "knowledge gain covers {} of {} sessions with doubly-rated summaries",
            sessions.len(),
            study.sessions.len()
        ));
    }
    let ids: Vec<String> = study
        .design
        .conditions
        .iter()
        .map(|c| c.condition_id.clone())
        .collect();
    let gain = cohort_gain(&sessions, &ids, config)?;
    if gain.gate_waived {
        notes.push("inter-rater agreement gate waived by configuration".to_owned());
    }
    Ok(Some(gain))
}

fn run_tests(
    measure: &str,
    planned: &[TestKind],
    n: usize,
    mut run: impl FnMut(TestKind) -> Result<StatTestResult>,
) -> MeasureTests {
    let tests: Vec<TestOutcome> = planned
        .iter()
        .map(|&test| match run(test) {
            Ok(r) => TestOutcome {
                test,
                result: Some(r),
                error: None,
            },
            Err(e) => TestOutcome {
                test,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let verdicts = |parametric: bool| -> BTreeSet<bool> {
        tests
            .iter()
            .filter(|t| t.test.is_parametric() == parametric)
            .filter_map(|t| t.result.as_ref().map(|r| r.significant))
            .collect()
    };
    let (p, np) = (verdicts(true), verdicts(false));
    let disagreement = !p.is_empty() && !np.is_empty() && p != np;
    MeasureTests {
        measure: measure.to_owned(),
        n,
        tests,
        disagreement,
    }
}

fn assign_bands(
    spec: &BenchmarkSpec,
    conditions: &mut [ConditionReport],
    gain: Option<&CohortGain>,
) -> Result<()> {
    let bands = crate::stats::bands_by_measure(spec);
    for cond in conditions {
        let mut out = Vec::new();
        for (measure, b) in &bands {
            let mean = if let Some(d) = RatingDimension::ALL
                .into_iter()
                .find(|d| kg_measure(*d) == *measure)
            {
                gain.and_then(|g| g.condition(&cond.condition_id))
                    .filter(|c| c.n > 0)
                    .map(|c| c.mean_deltas.get(d))
            } else {
                cond.score(measure).map(|s| s.mean)
            };
            if let Some(mean) = mean {
                out.push(MeasureBand {
                    measure: (*measure).to_owned(),
                    mean,
                    band: benchmark_band(mean, b)?,
                });
            }
        }
        cond.benchmark_bands = out;
    }
    Ok(())
}

/// Serializes a report. The structured form is canonical JSON.
pub fn render(report: &AnalysisReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Structured => canonical_json(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn sentiment_cell(s: Sentiment) -> &'static str {
    match s {
        Sentiment::Positive => "Positive (green)",
        Sentiment::Neutral => "Neutral (yellow)",
        Sentiment::Negative => "Negative (red)",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"))
}

fn render_markdown(r: &AnalysisReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Study analysis: {}\n", r.study_id);
    let mode = match r.mode {
        StudyMode::Comparative => "comparative",
        StudyMode::BenchmarkOnly => "benchmark only",
    };
    let _ = writeln!(md, "- Mode: {mode}");
    let _ = writeln!(md, "- Generator: {}", r.generator);
    let _ = writeln!(md, "- Alpha: {}", r.config.alpha);
    if !r.complete {
        let _ = writeln!(md, "- **Partial report**: data collection is incomplete");
    }
    let _ = writeln!(md);

    let _ = writeln!(md, "## Dimensions\n");
    let mut header = "| Instrument | Subscale |".to_owned();
    let mut rule = "|---|---|".to_owned();
    for c in &r.condition_results {
        let _ = write!(
            header,
            " {} mean | {} sentiment |",
            c.condition_id, c.condition_id
        );
        rule.push_str("---:|---|");
    }
    let _ = writeln!(md, "{header}\n{rule}");
    let mut rows: Vec<(String, String)> = Vec::new();
    for c in &r.condition_results {
        for a in c
            .annotations
            .iter()
            .filter(|a| a.level == TargetLevel::Subscale)
        {
            let key = (a.instrument_id.clone(), a.id.clone());
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
    }
    for (inst, sub) in &rows {
        let _ = write!(md, "| {inst} | {sub} |");
        for c in &r.condition_results {
            let a = c.annotations.iter().find(|a| {
                a.level == TargetLevel::Subscale && &a.instrument_id == inst && &a.id == sub
            });
            match a {
                Some(a) => {
                    let _ = write!(md, " {:.3} | {} |", a.mean, sentiment_cell(a.sentiment));
                }
                None => md.push_str(" n/a | not scored |"),
            }
        }
        md.push('\n');
    }
    let _ = writeln!(md);

    let _ = writeln!(md, "## Sections\n");
    let _ = writeln!(
        md,
        "| Condition | Section | Positive | Neutral | Negative |\n|---|---|---:|---:|---:|"
    );
    for c in &r.condition_results {
        for t in &c.section_tallies {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                c.condition_id, t.section, t.positive, t.neutral, t.negative
            );
        }
    }
    let _ = writeln!(md, "\n## Needs improvement\n");
    let mut any = false;
    for c in &r.condition_results {
        let flagged: Vec<&str> = c.flagged_sections().collect();
        if !flagged.is_empty() {
            any = true;
            let _ = writeln!(md, "- {}: {}", c.condition_id, flagged.join(", "));
        }
    }
    if !any {
        let _ = writeln!(md, "No section has negative dimensions.");
    }

    let _ = writeln!(md, "\n## Significance tests\n");
    if r.tests.is_empty() {
        let _ = writeln!(md, "No tests were run.");
    } else {
        let _ = writeln!(
            md,
            "| Measure | n | Test | Statistic | df | p | Significant | Effect size (descriptive) | Method |\n|---|---:|---|---:|---:|---:|---|---:|---|"
        );
        for m in &r.tests {
            for t in &m.tests {
                match (&t.result, &t.error) {
                    (Some(res), _) => {
                        let _ = writeln!(
                            md,
                            "| {} | {} | {} | {:.4} | {} | {:.4} | {} | {} | {} |",
                            m.measure,
                            m.n,
                            t.test.name(),
                            res.statistic,
                            fmt_opt(res.df),
                            res.p_value,
                            if res.significant { "yes" } else { "no" },
                            fmt_opt(res.effect_size.map(|e| e.value)),
                            res.method_note
                        );
                    }
                    (None, err) => {
                        let _ = writeln!(
                            md,
                            "| {} | {} | {} | | | | | | error: {} |",
                            m.measure,
                            m.n,
                            t.test.name(),
                            err.as_deref().unwrap_or("")
                        );
                    }
                }
            }
        }
        let split: Vec<&str> = r
            .tests
            .iter()
            .filter(|m| m.disagreement)
            .map(|m| m.measure.as_str())
            .collect();
        if !split.is_empty() {
            let _ = writeln!(
                md,
                "\nParametric and rank-based tests disagree on: {}",
                split.join(", ")
            );
        }
    }

    let bands: Vec<(&str, &MeasureBand)> = r
        .condition_results
        .iter()
        .flat_map(|c| {
            c.benchmark_bands
                .iter()
                .map(move |b| (c.condition_id.as_str(), b))
        })
        .collect();
    if !bands.is_empty() {
        let _ = writeln!(md, "\n## Benchmark bands\n");
        let _ = writeln!(
            md,
            "| Condition | Measure | Mean | Band |\n|---|---|---:|---|"
        );
        for (c, b) in bands {
            let clamp = if b.band.clamped { " (clamped)" } else { "" };
            let _ = writeln!(
                md,
                "| {c} | {} | {:.3} | {}{clamp} |",
                b.measure, b.mean, b.band.label
            );
        }
    }

    if let Some(kg) = &r.knowledge_gain {
        let _ = writeln!(md, "\n## Knowledge gain\n");
        let kappas: Vec<String> = kg
            .agreement
            .kappa
            .iter()
            .map(|(d, k)| {
                format!(
                    "{d} {}",
                    k.map_or_else(|| "undefined".to_owned(), |k| format!("{k:.3}"))
                )
            })
            .collect();
        let _ = writeln!(
            md,
            "Agreement over {} doubly-rated summaries: {}{}\n",
            kg.agreement.rated_pairs,
            kappas.join(", "),
            if kg.gate_waived { " (gate waived)" } else { "" }
        );
        let _ = writeln!(
            md,
            "| Condition | n | mean delta dqual | mean delta dintrp | mean delta dcrit | gained | fraction |\n|---|---:|---:|---:|---:|---:|---:|"
        );
        for c in &kg.conditions {
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {} | {:.3} |",
                c.condition_id,
                c.n,
                c.mean_deltas.delta_dqual,
                c.mean_deltas.delta_dintrp,
                c.mean_deltas.delta_dcrit,
                c.gained_count,
                c.gained_fraction
            );
        }
    }

    let _ = writeln!(md, "\n## Documents viewed\n");
    for c in &r.condition_results {
        let _ = writeln!(
            md,
            "- {}: {} per search",
            c.condition_id,
            fmt_opt(c.docs_viewed_average)
        );
    }
    if !r.notes.is_empty() {
        let _ = writeln!(md, "\n## Notes\n");
        for n in &r.notes {
            let _ = writeln!(md, "- {n}");
        }
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bands, BenchmarkEntry, BenchmarkRef, InterfaceKind, SessionState};
    use crate::testutil::{comparative_design, complete_session};

    fn comparative_study(n: usize) -> Study {
        let reg = InstrumentRegistry::builtin();
        let design = comparative_design();
        let mut study = Study::new(design.clone());
        for i in 0..n {
            let v = 3 + (i % 4) as i32;
            study.sessions.push(complete_session(
                &reg,
                &design,
                &format!("c{i}"),
                &format!("p{i}"),
                "conv",
                v,
            ));
            study.sessions.push(complete_session(
                &reg,
                &design,
                &format!("w{i}"),
                &format!("p{i}"),
                "web",
                v - 1,
            ));
        }
        study
    }

    #[test]
    fn comparative_report_shape() {
        let study = comparative_study(12);
        let r = analyze(&study).unwrap();
        assert!(r.complete);
        assert_eq!(r.condition_results.len(), 2);
        assert_eq!(r.instruments[..3], ["PSSUQ", "UEQ-S", "NASA-TLX"]);
        for t in &r.tests {
            for o in &t.tests {
                assert!(o.test.is_dependent());
            }
        }
        let pssuq = r.measure_tests("PSSUQ/OVERALL").unwrap();
        assert_eq!(pssuq.n, 12);
        // constant shift of 1: differences have zero variance
        assert!(pssuq.tests[0].error.is_some());
        let w = pssuq.result(TestKind::WilcoxonSignedRank).unwrap();
        assert!(w.significant);

        let reg = study.registry();
        for c in &r.condition_results {
            let subscales: usize = r
                .instruments
                .iter()
                .filter_map(|i| reg.get(i))
                .filter(|i| i.is_likert())
                .map(|i| i.effective_subscales().len())
                .sum();
            assert_eq!(c.scores.len() + c.unscored.len(), subscales);
            let items: BTreeSet<(&str, &str)> = c
                .scores
                .iter()
                .flat_map(|s| {
                    s.per_item_means
                        .keys()
                        .map(move |k| (s.instrument_id.as_str(), k.as_str()))
                })
                .collect();
            assert_eq!(c.annotations.len(), c.scores.len() + items.len());
        }
        assert!(r.knowledge_gain.is_some());
        assert!(r.measure_tests("KG/delta_dqual").is_some());
    }

    #[test]
    fn render_is_deterministic_and_markdown_has_cells() {
        let study = comparative_study(4);
        let a = render(&analyze(&study).unwrap(), ReportFormat::Structured);
        let b = render(&analyze(&study).unwrap(), ReportFormat::Structured);
        assert_eq!(a, b);
        let md = render(&analyze(&study).unwrap(), ReportFormat::Markdown);
        let r = analyze(&study).unwrap();
        let cells = md.matches("(green)").count()
            + md.matches("(yellow)").count()
            + md.matches("(red)").count();
        let subscales = r
            .condition_results
            .iter()
            .map(|c| c.scores.len())
            .sum::<usize>();
        assert_eq!(cells, subscales);
        assert!(md.contains("## Needs improvement"));
    }

    #[test]
    fn flagged_section_named_under_needs_improvement() {
        let reg = InstrumentRegistry::builtin();
        let design = comparative_design();
        let mut study = Study::new(design.clone());
        for i in 0..3 {
            let mut s =
                complete_session(&reg, &design, &format!("c{i}"), &format!("p{i}"), "conv", 1);
            for r in s
                .post_responses
                .iter_mut()
                .filter(|r| r.instrument_id != "PSSUQ")
            {
                r.value = 6;
            }
            study.sessions.push(s);
            study.sessions.push(complete_session(
                &reg,
                &design,
                &format!("w{i}"),
                &format!("p{i}"),
                "web",
                6,
            ));
        }
        let r = analyze(&study).unwrap();
        let conv = r.condition("conv").unwrap();
        assert_eq!(
            conv.flagged_sections().collect::<Vec<_>>(),
            ["software_usability"]
        );
        let md = render(&r, ReportFormat::Markdown);
        let tail = md.split("## Needs improvement").nth(1).unwrap();
        assert!(tail.contains("conv: software_usability"));
    }

    #[test]
    fn empty_study_is_a_validation_error() {
        let study = Study::new(comparative_design());
        match analyze(&study) {
            Err(Error::Validation(v)) => assert!(v.has(ViolationKind::NoSessions)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incomplete_study_flagged() {
        let mut study = comparative_study(3);
        study.sessions[0].state = SessionState::TaskDone;
        study.sessions[0].post_responses.clear();
        study.sessions[0].post_summary = None;
        let r = analyze(&study).unwrap();
        assert!(!r.complete);
        assert!(r.notes.iter().any(|n| n.contains("incomplete")));
        assert_eq!(r.knowledge_gain.unwrap().conditions[0].n, 2);
    }

    #[test]
    fn benchmark_mu_only_gives_one_sample_results() {
        let reg = InstrumentRegistry::builtin();
        let mut design = comparative_design();
        design.mode = StudyMode::BenchmarkOnly;
        design.conditions.truncate(1);
        design.conditions[0].kind = InterfaceKind::Conversational;
        let mut measures = BTreeMap::new();
        measures.insert(
            "PSSUQ/OVERALL".to_owned(),
            BenchmarkEntry {
                mu: Some(4.0),
                ..Default::default()
            },
        );
        measures.insert(
            "UEQ-S/pragmatic".to_owned(),
            BenchmarkEntry {
                bands: Some(Bands {
                    edges: vec![-3.0, -1.0, 1.0, 3.0],
                    labels: vec!["bad".into(), "ok".into(), "good".into()],
                }),
                ..Default::default()
            },
        );
        design.benchmark = Some(BenchmarkRef::Inline(BenchmarkSpec { measures }));
        let mut study = Study::new(design.clone());
        for i in 0..5 {
            study.sessions.push(complete_session(
                &reg,
                &design,
                &format!("c{i}"),
                &format!("p{i}"),
                "conv",
                3 + (i % 3),
            ));
        }
        let r = analyze(&study).unwrap();
        let kinds: BTreeSet<TestKind> = r
            .tests
            .iter()
            .flat_map(|m| m.tests.iter().map(|t| t.test))
            .collect();
        assert_eq!(kinds, BTreeSet::from([TestKind::OneSampleT]));
        let bands = &r.condition_results[0].benchmark_bands;
        assert_eq!(bands.len(), 1);
        assert_eq!(bands[0].band.label, "ok");
    }
}
