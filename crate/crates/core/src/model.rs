//! Domain types shared by every other module, plus whole-study validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::instruments::{InstrumentRegistry, ResponseKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    /// Conversational interface compared against a conventional one, same participants.
    Comparative,
    /// A single conversational interface judged against external benchmarks.
    BenchmarkOnly,
}

impl StudyMode {
    pub fn expected_conditions(self) -> usize {
        match self {
            StudyMode::Comparative => 2,
            StudyMode::BenchmarkOnly => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Conversational,
    Conventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceCondition {
    pub condition_id: String,
    pub kind: InterfaceKind,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDesign {
    pub study_id: String,
    pub mode: StudyMode,
    pub conditions: Vec<InterfaceCondition>,
    pub instruments: Vec<String>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkRef>,
}

impl StudyDesign {
    pub fn condition(&self, condition_id: &str) -> Option<&InterfaceCondition> {
        self.conditions
            .iter()
            .find(|c| c.condition_id == condition_id)
    }
}

/// Closed interval of means annotated as neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutralBand {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub kappa_threshold: f64,
    pub scale_min: i32,
    pub scale_max: i32,
    pub neutral_band: NeutralBand,
    pub exact_test_cutoff: usize,
    /// Run knowledge-gain analysis even when the agreement gate fails.
    /// The waiver is recorded in the report.
    pub waive_kappa_gate: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.05,
            kappa_threshold: 0.85,
            scale_min: 1,
            scale_max: 7,
            neutral_band: NeutralBand {
                lower: 2.0,
                upper: 4.0,
            },
            exact_test_cutoff: 12,
            waive_kappa_gate: false,
        }
    }
}

impl AnalysisConfig {
    pub fn scale_midpoint(&self) -> f64 {
        (self.scale_min as f64 + self.scale_max as f64) / 2.0
    }

    pub fn value_in_scale(&self, value: i32) -> bool {
        (self.scale_min..=self.scale_max).contains(&value)
    }

    /// Returns a description of each violated invariant.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.scale_min >= self.scale_max {
            out.push(format!(
                "scale_min {} must be below scale_max {}",
                self.scale_min, self.scale_max
            ));
        }
        let band = self.neutral_band;
        if !(band.lower <= band.upper
            && band.lower >= self.scale_min as f64
            && band.upper <= self.scale_max as f64)
        {
            out.push(format!(
                "neutral band [{}, {}] must lie inside [{}, {}]",
                band.lower, band.upper, self.scale_min, self.scale_max
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            out.push(format!("alpha {} must be in (0, 1)", self.alpha));
        }
        if !(-1.0..=1.0).contains(&self.kappa_threshold) {
            out.push(format!(
                "kappa_threshold {} must be in [-1, 1]",
                self.kappa_threshold
            ));
        }
        out
    }
}

/// A benchmark given inline in the design or as a path relative to the study directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenchmarkRef {
    File(String),
    Inline(BenchmarkSpec),
}

/// Reference values keyed by measure id (`INSTRUMENT/subscale`, or `KG/delta_dqual` etc.).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub measures: BTreeMap<String, BenchmarkEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bands: Option<Bands>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceStats {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Ordered category bands: `labels[i]` covers `[edges[i], edges[i + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bands {
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
}

impl Bands {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.edges.len() < 2 {
            out.push("bands need at least two edges".to_owned());
        }
        if self
            .edges
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            out.push("band edges must be strictly increasing".to_owned());
        }
        if self.labels.len() + 1 != self.edges.len() {
            out.push(format!(
                "{} edges require {} labels, found {}",
                self.edges.len(),
                self.edges.len().saturating_sub(1),
                self.labels.len()
            ));
        }
        out
    }
}

impl BenchmarkSpec {
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (measure, entry) in &self.measures {
            if let Some(reference) = &entry.reference {
                if reference.n < 2 {
                    out.push((measure.clone(), "reference n must be at least 2".to_owned()));
                }
                if reference.sd.is_nan() || reference.sd < 0.0 {
                    out.push((
                        measure.clone(),
                        "reference sd must be nonnegative".to_owned(),
                    ));
                }
            }
            if let Some(sample) = &entry.sample {
                if sample.len() < 2 {
                    out.push((
                        measure.clone(),
                        "reference sample needs at least 2 values".to_owned(),
                    ));
                }
            }
            if let Some(bands) = &entry.bands {
                for p in bands.problems() {
                    out.push((measure.clone(), p));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Participant {
    pub participant_id: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(Phase::Pre),
            "post" => Ok(Phase::Post),
            other => Err(format!("phase must be `pre` or `post`, found `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Created,
    PreDone,
    TaskDone,
    PostDone,
    Closed,
}

impl SessionState {
    /// The session has been through the post-search questionnaire.
    pub fn is_finished(self) -> bool {
        self >= SessionState::PostDone
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemResponse {
    pub instrument_id: String,
    pub item_id: String,
    pub value: i32,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatingDimension {
    Dqual,
    Dintrp,
    Dcrit,
}

impl RatingDimension {
    pub const ALL: [RatingDimension; 3] = [
        RatingDimension::Dqual,
        RatingDimension::Dintrp,
        RatingDimension::Dcrit,
    ];

    pub fn max(self) -> u8 {
        match self {
            RatingDimension::Dqual => 3,
            RatingDimension::Dintrp => 2,
            RatingDimension::Dcrit => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RatingDimension::Dqual => "dqual",
            RatingDimension::Dintrp => "dintrp",
            RatingDimension::Dcrit => "dcrit",
        }
    }
}

/// One annotator's score of one summary: fact quality 0..=3, fact
/// association 0..=2, critique quality 0..=1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRating {
    pub annotator_id: String,
    pub dqual: u8,
    pub dintrp: u8,
    pub dcrit: u8,
}

impl SummaryRating {
    pub fn score(&self, dimension: RatingDimension) -> u8 {
        match dimension {
            RatingDimension::Dqual => self.dqual,
            RatingDimension::Dintrp => self.dintrp,
            RatingDimension::Dcrit => self.dcrit,
        }
    }

    /// Dimensions whose score exceeds the allowed range.
    pub fn out_of_range(&self) -> Vec<RatingDimension> {
        RatingDimension::ALL
            .into_iter()
            .filter(|d| self.score(*d) > d.max())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryDocument {
    pub summary_id: String,
    pub phase: Phase,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub ratings: Vec<SummaryRating>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    pub condition_id: String,
    #[serde(default)]
    pub topic: String,
    #[serde(default)]
    pub pre_responses: Vec<ItemResponse>,
    #[serde(default)]
    pub post_responses: Vec<ItemResponse>,
    #[serde(default)]
    pub pre_summary: Option<SummaryDocument>,
    #[serde(default)]
    pub post_summary: Option<SummaryDocument>,
    #[serde(default)]
    pub docs_viewed: u32,
    pub state: SessionState,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        participant_id: impl Into<String>,
        condition_id: impl Into<String>,
    ) -> Self {
        Session {
            session_id: session_id.into(),
            participant_id: participant_id.into(),
            condition_id: condition_id.into(),
            topic: String::new(),
            pre_responses: Vec::new(),
            post_responses: Vec::new(),
            pre_summary: None,
            post_summary: None,
            docs_viewed: 0,
            state: SessionState::Created,
        }
    }

    pub fn responses(&self, phase: Phase) -> &[ItemResponse] {
        match phase {
            Phase::Pre => &self.pre_responses,
            Phase::Post => &self.post_responses,
        }
    }

    pub fn responses_mut(&mut self, phase: Phase) -> &mut Vec<ItemResponse> {
        match phase {
            Phase::Pre => &mut self.pre_responses,
            Phase::Post => &mut self.post_responses,
        }
    }

    pub fn summary(&self, phase: Phase) -> Option<&SummaryDocument> {
        match phase {
            Phase::Pre => self.pre_summary.as_ref(),
            Phase::Post => self.post_summary.as_ref(),
        }
    }

    pub fn summary_mut(&mut self, phase: Phase) -> &mut Option<SummaryDocument> {
        match phase {
            Phase::Pre => &mut self.pre_summary,
            Phase::Post => &mut self.post_summary,
        }
    }

    pub fn all_responses(&self) -> impl Iterator<Item = &ItemResponse> {
        self.pre_responses.iter().chain(self.post_responses.iter())
    }

    /// Moves the session forward. Returns false (and leaves the state
    /// untouched) when `next` would not be a forward move.
    pub fn advance_to(&mut self, next: SessionState) -> bool {
        if next > self.state {
            self.state = next;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentiment::Negative => "negative",
            Sentiment::Neutral => "neutral",
            Sentiment::Positive => "positive",
        }
    }
}

impl std::str::FromStr for Sentiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            "positive" => Ok(Sentiment::Positive),
            other => Err(format!("unknown sentiment `{other}`")),
        }
    }
}

/// An analyst's manual sentiment label for one scored target in one condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalystAnnotation {
    pub condition_id: String,
    pub target: String,
    pub annotator_id: String,
    pub sentiment: Sentiment,
}

/// Everything persisted for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub design: StudyDesign,
    pub participants: Vec<Participant>,
    pub sessions: Vec<Session>,
    #[serde(default)]
    pub analyst_annotations: Vec<AnalystAnnotation>,
    /// Instrument definitions replacing or extending the built-ins.
    #[serde(default)]
    pub instrument_overrides: Vec<crate::instruments::Instrument>,
    /// Contents of the benchmark file when the design references one by path.
    #[serde(default)]
    pub benchmark_file: Option<BenchmarkSpec>,
}

impl Study {
    pub fn new(design: StudyDesign) -> Self {
        Study {
            design,
            participants: Vec::new(),
            sessions: Vec::new(),
            analyst_annotations: Vec::new(),
            instrument_overrides: Vec::new(),
            benchmark_file: None,
        }
    }

    /// Built-in instruments merged with this study's overrides.
    pub fn registry(&self) -> InstrumentRegistry {
        InstrumentRegistry::builtin().merged(self.instrument_overrides.iter().cloned())
    }

    /// The benchmark in effect, whether inline or loaded from a file.
    pub fn benchmark(&self) -> Option<&BenchmarkSpec> {
        match &self.design.benchmark {
            Some(BenchmarkRef::Inline(spec)) => Some(spec),
            Some(BenchmarkRef::File(_)) => self.benchmark_file.as_ref(),
            None => None,
        }
    }

    pub fn session(&self, session_id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.session_id == session_id)
    }

    pub fn session_mut(&mut self, session_id: &str) -> Option<&mut Session> {
        self.sessions
            .iter_mut()
            .find(|s| s.session_id == session_id)
    }

    /// Validates design, participants and sessions together.
    pub fn validate(&self, registry: &InstrumentRegistry) -> ValidationReport {
        let mut report = validate_study(&self.design, &self.sessions, registry);
        let mut seen = BTreeSet::new();
        for p in &self.participants {
            if !seen.insert(p.participant_id.as_str()) {
                report.push(
                    ViolationKind::DuplicateParticipant,
                    format!("participant {}", p.participant_id),
                    "participant_id is not unique",
                );
            }
        }
        if !self.participants.is_empty() {
            for s in &self.sessions {
                if !seen.contains(s.participant_id.as_str()) {
                    report.push(
                        ViolationKind::UnknownParticipant,
                        format!("session {}", s.session_id),
                        format!("unknown participant_id `{}`", s.participant_id),
                    );
                }
            }
        }
        if let (Some(BenchmarkRef::File(path)), Some(spec)) =
            (&self.design.benchmark, &self.benchmark_file)
        {
            for (measure, problem) in spec.problems() {
                report.push(
                    ViolationKind::InvalidBenchmark,
                    format!("benchmark {path} {measure}"),
                    problem,
                );
            }
        }
        for a in &self.analyst_annotations {
            if self.design.condition(&a.condition_id).is_none() {
                report.push(
                    ViolationKind::UnknownCondition,
                    format!("annotation {}/{}", a.condition_id, a.target),
                    format!("unknown condition_id `{}`", a.condition_id),
                );
            }
        }
        report.normalize();
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    ConditionCount,
    DuplicateCondition,
    UnknownInstrument,
    InvalidConfig,
    InvalidBenchmark,
    DuplicateParticipant,
    UnknownParticipant,
    DuplicateSession,
    UnknownCondition,
    UnknownItem,
    NotLikertItem,
    WrongPhase,
    ValueOutOfScale,
    DuplicateResponse,
    InvalidTimestamp,
    SummaryPhase,
    DuplicateRating,
    RatingOutOfRange,
    StateInconsistent,
    NoSessions,
}

impl ViolationKind {
    pub fn describe(self) -> &'static str {
        match self {
            ViolationKind::ConditionCount => "condition count",
            ViolationKind::DuplicateCondition => "duplicate condition",
            ViolationKind::UnknownInstrument => "unknown instrument",
            ViolationKind::InvalidConfig => "invalid analysis config",
            ViolationKind::InvalidBenchmark => "invalid benchmark",
            ViolationKind::DuplicateParticipant => "duplicate participant",
            ViolationKind::UnknownParticipant => "unknown participant",
            ViolationKind::DuplicateSession => "duplicate session",
            ViolationKind::UnknownCondition => "unknown condition_id",
            ViolationKind::UnknownItem => "unknown item",
            ViolationKind::NotLikertItem => "not a Likert item",
            ViolationKind::WrongPhase => "wrong phase",
            ViolationKind::ValueOutOfScale => "value out of scale",
            ViolationKind::DuplicateResponse => "duplicate response",
            ViolationKind::InvalidTimestamp => "invalid timestamp",
            ViolationKind::SummaryPhase => "summary phase mismatch",
            ViolationKind::DuplicateRating => "duplicate rating",
            ViolationKind::RatingOutOfRange => "rating out of range",
            ViolationKind::StateInconsistent => "state inconsistent",
            ViolationKind::NoSessions => "no sessions",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({})",
            self.location,
            self.kind.describe(),
            self.detail
        )
    }
}

/// Violations found by validation, kept in sorted order so reports do not
/// depend on input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub(crate) fn push(
        &mut self,
        kind: ViolationKind,
        location: impl Into<String>,
        detail: impl Into<String>,
    ) {
        self.violations.push(Violation {
            kind,
            location: location.into(),
            detail: detail.into(),
        });
    }

    fn normalize(&mut self) {
        self.violations.sort();
    }

    pub fn into_result(self) -> crate::Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Checks every invariant of the design and its sessions against the
/// instrument registry. Violations are returned as data; nothing is mutated.
pub fn validate_study(
    design: &StudyDesign,
    sessions: &[Session],
    registry: &InstrumentRegistry,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let config = &design.analysis;

    let expected = design.mode.expected_conditions();
    if design.conditions.len() != expected {
        report.push(
            ViolationKind::ConditionCount,
            "design",
            format!(
                "{:?} mode needs exactly {expected} condition(s), found {}",
                design.mode,
                design.conditions.len()
            ),
        );
    }
    let mut condition_ids = BTreeSet::new();
    for c in &design.conditions {
        if !condition_ids.insert(c.condition_id.as_str()) {
            report.push(
                ViolationKind::DuplicateCondition,
                "design",
                format!("condition_id `{}` is not unique", c.condition_id),
            );
        }
    }
    for id in &design.instruments {
        if registry.get(id).is_none() {
            report.push(
                ViolationKind::UnknownInstrument,
                "design",
                format!("instrument `{id}` is not registered"),
            );
        }
    }
    for problem in config.problems() {
        report.push(ViolationKind::InvalidConfig, "design.analysis", problem);
    }
    if let Some(BenchmarkRef::Inline(spec)) = &design.benchmark {
        for (measure, problem) in spec.problems() {
            report.push(
                ViolationKind::InvalidBenchmark,
                format!("benchmark {measure}"),
                problem,
            );
        }
    }

    let mut session_ids = BTreeSet::new();
    let mut summary_ids: BTreeMap<&str, &str> = BTreeMap::new();
    for s in sessions {
        let loc = format!("session {}", s.session_id);
        if !session_ids.insert(s.session_id.as_str()) {
            report.push(
                ViolationKind::DuplicateSession,
                &loc,
                "session_id is not unique",
            );
        }
        if !condition_ids.contains(s.condition_id.as_str()) {
            report.push(
                ViolationKind::UnknownCondition,
                &loc,
                format!("unknown condition_id `{}`", s.condition_id),
            );
        }

        for phase in [Phase::Pre, Phase::Post] {
            let mut seen = BTreeSet::new();
            for r in s.responses(phase) {
                let rloc = format!("{loc} {phase} {}/{}", r.instrument_id, r.item_id);
                if !seen.insert((r.instrument_id.as_str(), r.item_id.as_str())) {
                    report.push(
                        ViolationKind::DuplicateResponse,
                        &rloc,
                        "item answered twice",
                    );
                }
                check_response(&mut report, design, registry, phase, r, &rloc);
            }
        }
        if !s.post_responses.is_empty() && s.state < SessionState::TaskDone {
            report.push(
                ViolationKind::StateInconsistent,
                &loc,
                format!("post-search responses present in state {:?}", s.state),
            );
        }

        for phase in [Phase::Pre, Phase::Post] {
            let Some(summary) = s.summary(phase) else {
                continue;
            };
            let sloc = format!("{loc} {phase} summary {}", summary.summary_id);
            if summary.phase != phase {
                report.push(
                    ViolationKind::SummaryPhase,
                    &sloc,
                    format!("stored as {phase} but marked {}", summary.phase),
                );
            }
            if let Some(other) = summary_ids.insert(&summary.summary_id, &s.session_id) {
                report.push(
                    ViolationKind::DuplicateSession,
                    &sloc,
                    format!("summary_id also used by session {other}"),
                );
            }
            if phase == Phase::Post && s.state < SessionState::TaskDone {
                report.push(
                    ViolationKind::StateInconsistent,
                    &sloc,
                    format!("post-search summary present in state {:?}", s.state),
                );
            }
            let mut annotators = BTreeSet::new();
            for rating in &summary.ratings {
                if !annotators.insert(rating.annotator_id.as_str()) {
                    report.push(
                        ViolationKind::DuplicateRating,
                        &sloc,
                        format!("annotator `{}` rated twice", rating.annotator_id),
                    );
                }
                for d in rating.out_of_range() {
                    report.push(
                        ViolationKind::RatingOutOfRange,
                        &sloc,
                        format!(
                            "annotator `{}` {} = {} outside 0..={}",
                            rating.annotator_id,
                            d.name(),
                            rating.score(d),
                            d.max()
                        ),
                    );
                }
            }
        }
    }

    report.normalize();
    report
}

fn check_response(
    report: &mut ValidationReport,
    design: &StudyDesign,
    registry: &InstrumentRegistry,
    phase: Phase,
    r: &ItemResponse,
    loc: &str,
) {
    let config = &design.analysis;
    if !design.instruments.contains(&r.instrument_id) {
        report.push(
            ViolationKind::UnknownInstrument,
            loc,
            format!("instrument `{}` is not part of the study", r.instrument_id),
        );
    }
    match registry.item(&r.instrument_id, &r.item_id) {
        None => report.push(
            ViolationKind::UnknownItem,
            loc,
            "item not found in registry",
        ),
        Some(item) => {
            if item.phase != phase {
                report.push(
                    ViolationKind::WrongPhase,
                    loc,
                    format!("item belongs to phase {}", item.phase),
                );
            }
            if item.kind != ResponseKind::Likert {
                report.push(
                    ViolationKind::NotLikertItem,
                    loc,
                    format!("item is {:?}, not rated on the Likert scale", item.kind),
                );
            }
        }
    }
    if !config.value_in_scale(r.value) {
        report.push(
            ViolationKind::ValueOutOfScale,
            loc,
            format!(
                "value {} outside {}..={}",
                r.value, config.scale_min, config.scale_max
            ),
        );
    }
    if chrono::DateTime::parse_from_rfc3339(&r.timestamp).is_err() {
        report.push(
            ViolationKind::InvalidTimestamp,
            loc,
            format!("`{}` is not an ISO-8601 timestamp", r.timestamp),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{comparative_design, complete_session};

    fn registry() -> InstrumentRegistry {
        InstrumentRegistry::builtin()
    }

    #[test]
    fn single_condition_comparative_is_flagged() {
        let mut design = comparative_design();
        design.conditions.truncate(1);
        let report = validate_study(&design, &[], &registry());
        assert!(report.has(ViolationKind::ConditionCount));
        assert_eq!(report.violations[0].kind.describe(), "condition count");
    }

    #[test]
    fn out_of_scale_value_is_flagged() {
        let design = comparative_design();
        let mut s = complete_session(&registry(), &design, "s1", "p1", "conv", 5);
        s.post_responses[0].value = 9;
        let report = validate_study(&design, &[s], &registry());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::ValueOutOfScale);
    }

    #[test]
    fn well_formed_twelve_session_study_is_clean() {
        let design = comparative_design();
        let reg = registry();
        let mut sessions = Vec::new();
        for p in 0..6 {
            for (k, cond) in ["conv", "web"].iter().enumerate() {
                let sid = format!("s{p}{k}");
                sessions.push(complete_session(
                    &reg,
                    &design,
                    &sid,
                    &format!("p{p}"),
                    cond,
                    3 + k as i32,
                ));
            }
        }
        assert_eq!(sessions.len(), 12);
        let report = validate_study(&design, &sessions, &reg);
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn wrong_phase_and_rating_range() {
        let design = comparative_design();
        let reg = registry();
        let mut s = complete_session(&reg, &design, "s1", "p1", "conv", 4);
        let moved = s.post_responses.remove(0);
        s.pre_responses.push(moved);
        s.post_summary.as_mut().unwrap().ratings[0].dqual = 4;
        let report = validate_study(&design, &[s], &reg);
        assert!(report.has(ViolationKind::WrongPhase));
        assert!(report.has(ViolationKind::RatingOutOfRange));
    }

    #[test]
    fn state_never_regresses() {
        let mut s = Session::new("s", "p", "c");
        assert!(s.advance_to(SessionState::PreDone));
        assert!(!s.advance_to(SessionState::Created));
        assert!(!s.advance_to(SessionState::PreDone));
        assert_eq!(s.state, SessionState::PreDone);
    }

    #[test]
    fn config_invariants() {
        let mut c = AnalysisConfig::default();
        assert!(c.problems().is_empty());
        c.scale_min = 7;
        c.alpha = 1.0;
        assert_eq!(c.problems().len(), 3);
    }

    #[test]
    fn bands_must_increase() {
        let bands = Bands {
            edges: vec![0.0, 1.0, 1.0],
            labels: vec!["a".into(), "b".into()],
        };
        assert_eq!(bands.problems().len(), 1);
    }
}
