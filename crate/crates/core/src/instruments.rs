//! Built-in questionnaire definitions and the registry that resolves them.
//!
//! Exploration instruments (PSSUQ, UEQ-S, NASA-TLX) are answered after the
//! search task. The search-as-learning questionnaire spans both phases and
//! the knowledge-gain marker instrument stands for the two summary tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::model::Phase;
use crate::{Error, Result};

pub const PSSUQ: &str = "PSSUQ";
pub const UEQ_S: &str = "UEQ-S";
pub const NASA_TLX: &str = "NASA-TLX";
pub const SAL: &str = "SAL";
pub const KG: &str = "KG";

/// Report order: Exploration first, then Contentment.
pub const CANONICAL_ORDER: [&str; 5] = [PSSUQ, UEQ_S, NASA_TLX, SAL, KG];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Exploration,
    Contentment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringTransform {
    #[default]
    Raw,
    /// Values are shifted so the scale midpoint maps to zero.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    #[default]
    Likert,
    /// Logged as a count on the session (e.g. documents viewed).
    Count,
    /// A free-text summary scored later by annotators.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub item_id: String,
    pub prompt: String,
    #[serde(default)]
    pub negative_anchor: String,
    #[serde(default)]
    pub positive_anchor: String,
    pub phase: Phase,
    #[serde(default)]
    pub reverse_coded: bool,
    #[serde(default)]
    pub kind: ResponseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instrument {
    pub instrument_id: String,
    pub name: String,
    pub segment: Segment,
    /// Qualitative-analysis section the instrument's dimensions are tallied under.
    #[serde(default)]
    pub section: String,
    pub items: Vec<Item>,
    #[serde(default)]
    pub subscales: IndexMap<String, Vec<String>>,
    #[serde(default)]
    pub scoring_transform: ScoringTransform,
}

impl Instrument {
    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// True when the instrument collects Likert ratings at all.
    pub fn is_likert(&self) -> bool {
        self.items.iter().any(|i| i.kind == ResponseKind::Likert)
    }

    pub fn items_in_phase(&self, phase: Phase) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(move |i| i.phase == phase)
    }

    /// Subscales in declaration order. An instrument without explicit
    /// subscales has a single implicit `overall` subscale over all items.
    pub fn effective_subscales(&self) -> Vec<(String, Vec<String>)> {
        if self.subscales.is_empty() {
            vec![(
                "overall".to_owned(),
                self.items.iter().map(|i| i.item_id.clone()).collect(),
            )]
        } else {
            self.subscales
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        }
    }

    pub fn check(&self) -> Result<()> {
        let ctx = |field: &str| format!("instrument {} {field}", self.instrument_id);
        if self.instrument_id.is_empty() {
            return Err(Error::parse("instrument", "instrument_id required"));
        }
        let mut ids = BTreeSet::new();
        for item in &self.items {
            if !ids.insert(item.item_id.as_str()) {
                return Err(Error::parse(
                    ctx("items"),
                    format!("duplicate item_id `{}`", item.item_id),
                ));
            }
            if item.negative_anchor.trim().is_empty() || item.positive_anchor.trim().is_empty() {
                return Err(Error::parse(
                    ctx(&format!("item {}", item.item_id)),
                    "anchors required",
                ));
            }
        }
        let mut covered = BTreeSet::new();
        for (subscale, members) in &self.subscales {
            if members.is_empty() {
                return Err(Error::parse(
                    ctx(&format!("subscale {subscale}")),
                    "subscale has no items",
                ));
            }
            for m in members {
                if !ids.contains(m.as_str()) {
                    return Err(Error::parse(
                        ctx(&format!("subscale {subscale}")),
                        format!("unknown item_id `{m}`"),
                    ));
                }
                covered.insert(m.as_str());
            }
        }
        if !self.subscales.is_empty() {
            if let Some(orphan) = ids.iter().find(|id| !covered.contains(*id)) {
                return Err(Error::parse(
                    ctx("subscales"),
                    format!("item `{orphan}` belongs to no subscale"),
                ));
            }
        }
        Ok(())
    }
}

/// Immutable map from instrument id to definition.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentRegistry {
    instruments: BTreeMap<String, Instrument>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideFile {
    #[serde(default)]
    instruments: Vec<Instrument>,
}

impl InstrumentRegistry {
    pub fn builtin() -> Self {
        builtin_registry()
    }

    pub fn get(&self, instrument_id: &str) -> Option<&Instrument> {
        self.instruments.get(instrument_id)
    }

    pub fn item(&self, instrument_id: &str, item_id: &str) -> Option<&Item> {
        self.get(instrument_id)?.item(item_id)
    }

    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Instrument> {
        self.instruments.values()
    }

    /// Returns a copy where `overrides` replace instruments with the same id
    /// and add the rest.
    pub fn merged(&self, overrides: impl IntoIterator<Item = Instrument>) -> Self {
        let mut instruments = self.instruments.clone();
        for inst in overrides {
            instruments.insert(inst.instrument_id.clone(), inst);
        }
        InstrumentRegistry { instruments }
    }

    /// Orders instrument ids Exploration first (canonical order), then any
    /// custom instruments by segment and id.
    pub fn report_order<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> Vec<String> {
        let mut ids: Vec<&String> = ids.into_iter().collect();
        ids.sort_by_key(|id| {
            let rank = CANONICAL_ORDER
                .iter()
                .position(|c| c == id)
                .unwrap_or(CANONICAL_ORDER.len());
            let segment = self.get(id).map(|i| i.segment);
            (segment, rank, (*id).clone())
        });
        ids.into_iter().cloned().collect()
    }
}

/// Parses an override document and merges it over the built-in registry.
pub fn load_overrides(path: &Path) -> Result<InstrumentRegistry> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_overrides(&text, &path.display().to_string())
        .map(|list| InstrumentRegistry::builtin().merged(list))
}

/// Parses an override document. Blank input yields no overrides.
pub fn parse_overrides(text: &str, location: &str) -> Result<Vec<Instrument>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let file: OverrideFile = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("{location}:{}:{}", e.line(), e.column()), e))?;
    for inst in &file.instruments {
        inst.check().map_err(|e| match e {
            Error::Parse {
                location: l,
                message,
            } => Error::Parse {
                location: format!("{location}: {l}"),
                message,
            },
            other => other,
        })?;
    }
    Ok(file.instruments)
}

fn item(id: &str, prompt: &str, neg: &str, pos: &str, phase: Phase) -> Item {
    Item {
        item_id: id.to_owned(),
        prompt: prompt.to_owned(),
        negative_anchor: neg.to_owned(),
        positive_anchor: pos.to_owned(),
        phase,
        reverse_coded: false,
        kind: ResponseKind::Likert,
    }
}

fn subscales(entries: &[(&str, &[&str])]) -> IndexMap<String, Vec<String>> {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
        .collect()
}

const PSSUQ_PROMPTS: [&str; 16] = [
    "Overall, I am satisfied with how easy it is to use this system.",
    "It was simple to use this system.",
    "I was able to complete the tasks and scenarios quickly using this system.",
    "I felt comfortable using this system.",
    "It was easy to learn to use this system.",
    "I believe I could become productive quickly using this system.",
    "The system gave error messages that clearly told me how to fix problems.",
    "Whenever I made a mistake using the system, I could recover easily and quickly.",
    "The information (such as online help, on-screen messages, and other documentation) provided with this system was clear.",
    "It was easy to find the information I needed.",
    "The information was effective in helping me complete the tasks and scenarios.",
    "The organization of information on the system screens was clear.",
    "The interface of this system was pleasant.",
    "I liked using the interface of this system.",
    "This system has all the functions and capabilities I expect it to have.",
    "Overall, I am satisfied with this system.",
];

fn pssuq() -> Instrument {
    let items: Vec<Item> = PSSUQ_PROMPTS
        .iter()
        .enumerate()
        .map(|(i, p)| {
            item(
                &format!("q{:02}", i + 1),
                p,
                "strongly disagree",
                "strongly agree",
                Phase::Post,
            )
        })
        .collect();
    let ids: Vec<String> = items.iter().map(|i| i.item_id.clone()).collect();
    let mut subs = IndexMap::new();
    subs.insert("SYSUSE".to_owned(), ids[0..6].to_vec());
    subs.insert("INFOQUAL".to_owned(), ids[6..12].to_vec());
    subs.insert("INTERQUAL".to_owned(), ids[12..15].to_vec());
    subs.insert("OVERALL".to_owned(), ids.clone());
    Instrument {
        instrument_id: PSSUQ.to_owned(),
        name: "Post-Study System Usability Questionnaire".to_owned(),
        segment: Segment::Exploration,
        section: "software_usability".to_owned(),
        items,
        subscales: subs,
        scoring_transform: ScoringTransform::Raw,
    }
}

/// Table of UEQ-S anchors: pragmatic items first, hedonic items last.
pub const UEQ_S_ANCHORS: [(&str, &str); 8] = [
    ("obstructive", "supportive"),
    ("complicated", "easy"),
    ("inefficient", "efficient"),
    ("confusing", "clear"),
    ("boring", "exciting"),
    ("not interesting", "interesting"),
    ("conventional", "inventive"),
    ("usual", "leading edge"),
];

fn ueq_s() -> Instrument {
    let items: Vec<Item> = UEQ_S_ANCHORS
        .iter()
        .enumerate()
        .map(|(i, (neg, pos))| {
            item(
                &format!("ueq{}", i + 1),
                &format!("{neg} / {pos}"),
                neg,
                pos,
                Phase::Post,
            )
        })
        .collect();
    Instrument {
        instrument_id: UEQ_S.to_owned(),
        name: "User Experience Questionnaire (short)".to_owned(),
        segment: Segment::Exploration,
        section: "user_experience".to_owned(),
        items,
        subscales: subscales(&[
            ("pragmatic", &["ueq1", "ueq2", "ueq3", "ueq4"]),
            ("hedonic", &["ueq5", "ueq6", "ueq7", "ueq8"]),
            (
                "overall",
                &[
                    "ueq1", "ueq2", "ueq3", "ueq4", "ueq5", "ueq6", "ueq7", "ueq8",
                ],
            ),
        ]),
        scoring_transform: ScoringTransform::Centered,
    }
}

fn nasa_tlx() -> Instrument {
    let rows = [
        ("mental", "How mentally demanding was the task?"),
        ("physical", "How physically demanding was the task?"),
        (
            "temporal",
            "How hurried or rushed was the pace of the task?",
        ),
        (
            "performance",
            "How successful were you in accomplishing what you were asked to do?",
        ),
        (
            "effort",
            "How hard did you have to work to accomplish your level of performance?",
        ),
        (
            "frustration",
            "How insecure, discouraged, irritated, stressed, and annoyed were you?",
        ),
    ];
    Instrument {
        instrument_id: NASA_TLX.to_owned(),
        name: "NASA Task Load Index".to_owned(),
        segment: Segment::Exploration,
        section: "cognitive_load".to_owned(),
        items: rows
            .iter()
            .map(|(id, p)| item(id, p, "very low", "very high", Phase::Post))
            .collect(),
        subscales: subscales(&[
            ("demand", &["mental", "physical", "temporal"]),
            ("interaction", &["effort", "frustration", "performance"]),
            (
                "workload",
                &[
                    "mental",
                    "physical",
                    "temporal",
                    "performance",
                    "effort",
                    "frustration",
                ],
            ),
        ]),
        scoring_transform: ScoringTransform::Raw,
    }
}

/// Search-as-learning rows: (subscale, item id, prompt, phase).
pub const SAL_ROWS: [(&str, &str, &str, Phase); 16] = [
    (
        "search_formulation",
        "background_knowledge",
        "Background Knowledge",
        Phase::Pre,
    ),
    (
        "search_formulation",
        "interest_in_topic",
        "Interest in Topic",
        Phase::Pre,
    ),
    (
        "search_formulation",
        "anticipated_difficulty",
        "Anticipated Difficulty",
        Phase::Pre,
    ),
    (
        "content_selection",
        "actual_difficulty",
        "Actual Difficulty",
        Phase::Post,
    ),
    (
        "content_selection",
        "text_presentation_quality",
        "Text Presentation Quality",
        Phase::Post,
    ),
    (
        "content_selection",
        "docs_viewed",
        "Average number of docs viewed per search",
        Phase::Post,
    ),
    (
        "content_selection",
        "usefulness_of_results",
        "The usefulness of Search results",
        Phase::Post,
    ),
    (
        "content_selection",
        "text_relevance",
        "Text Relevance",
        Phase::Post,
    ),
    (
        "interaction_with_content",
        "cognitively_engaged",
        "Cognitively Engaged",
        Phase::Post,
    ),
    (
        "interaction_with_content",
        "suggestion_skills",
        "Suggestions Skills",
        Phase::Post,
    ),
    (
        "interaction_with_content",
        "system_understanding_input",
        "System Understanding Input",
        Phase::Post,
    ),
    (
        "interaction_with_content",
        "average_satisfaction",
        "Average Level of Satisfaction",
        Phase::Post,
    ),
    (
        "post_search",
        "search_success",
        "Search Success",
        Phase::Post,
    ),
    (
        "post_search",
        "presentation_of_results",
        "Presentation of the Search Results",
        Phase::Post,
    ),
    (
        "post_search",
        "knowledge_expansion",
        "Expansion of knowledge after the search",
        Phase::Post,
    ),
    (
        "post_search",
        "topic_understanding",
        "Understanding about the Topic",
        Phase::Post,
    ),
];

/// The SAL item logged as a per-session count rather than rated.
pub const DOCS_VIEWED_ITEM: &str = "docs_viewed";

fn sal() -> Instrument {
    let mut subs: IndexMap<String, Vec<String>> = IndexMap::new();
    let mut items = Vec::new();
    for (sub, id, prompt, phase) in SAL_ROWS {
        let mut it = item(id, prompt, "very low", "very high", phase);
        if id == DOCS_VIEWED_ITEM {
            it.kind = ResponseKind::Count;
            it.negative_anchor = "none".to_owned();
            it.positive_anchor = "many".to_owned();
        }
        items.push(it);
        subs.entry(sub.to_owned()).or_default().push(id.to_owned());
    }
    Instrument {
        instrument_id: SAL.to_owned(),
        name: "Search as Learning".to_owned(),
        segment: Segment::Contentment,
        section: "search_as_learning".to_owned(),
        items,
        subscales: subs,
        scoring_transform: ScoringTransform::Raw,
    }
}

fn knowledge_gain() -> Instrument {
    let summary = |id: &str, prompt: &str, phase| Item {
        kind: ResponseKind::Summary,
        ..item(
            id,
            prompt,
            "irrelevant facts",
            "specific, associated and critiqued facts",
            phase,
        )
    };
    Instrument {
        instrument_id: KG.to_owned(),
        name: "Knowledge Gain".to_owned(),
        segment: Segment::Contentment,
        section: "knowledge_gain".to_owned(),
        items: vec![
            summary(
                "pre_summary",
                "Write what you already know about the search topic.",
                Phase::Pre,
            ),
            summary(
                "post_summary",
                "Write what you now know about the search topic.",
                Phase::Post,
            ),
        ],
        subscales: IndexMap::new(),
        scoring_transform: ScoringTransform::Raw,
    }
}

/// The five built-in instruments.
pub fn builtin_registry() -> InstrumentRegistry {
    let instruments = [pssuq(), ueq_s(), nasa_tlx(), sal(), knowledge_gain()]
        .into_iter()
        .map(|i| (i.instrument_id.clone(), i))
        .collect();
    InstrumentRegistry { instruments }
}
