use crate::instruments::{InstrumentRegistry, ResponseKind};
use crate::model::*;

pub fn comparative_design() -> StudyDesign {
    StudyDesign {
        study_id: "demo".into(),
        mode: StudyMode::Comparative,
        conditions: vec![
            InterfaceCondition {
                condition_id: "conv".into(),
                kind: InterfaceKind::Conversational,
                label: "chat".into(),
            },
            InterfaceCondition {
                condition_id: "web".into(),
                kind: InterfaceKind::Conventional,
                label: "serp".into(),
            },
        ],
        instruments: crate::instruments::CANONICAL_ORDER
            .iter()
            .map(|s| s.to_string())
            .collect(),
        analysis: AnalysisConfig::default(),
        benchmark: None,
    }
}

/// A finished session answering every Likert item with `value`.
pub fn complete_session(
    reg: &InstrumentRegistry,
    design: &StudyDesign,
    sid: &str,
    pid: &str,
    cond: &str,
    value: i32,
) -> Session {
    let mut s = Session::new(sid, pid, cond);
    for id in &design.instruments {
        let inst = reg.get(id).unwrap();
        for item in inst.items.iter().filter(|i| i.kind == ResponseKind::Likert) {
            s.responses_mut(item.phase).push(ItemResponse {
                instrument_id: id.clone(),
                item_id: item.item_id.clone(),
                value,
                timestamp: "2024-03-01T10:00:00Z".into(),
            });
        }
    }
    let rating = |a: &str, q| SummaryRating {
        annotator_id: a.into(),
        dqual: q,
        dintrp: 1,
        dcrit: 0,
    };
    s.pre_summary = Some(SummaryDocument {
        summary_id: format!("{sid}-pre"),
        phase: Phase::Pre,
        text: "before".into(),
        ratings: vec![rating("a1", 1), rating("a2", 1)],
    });
    s.post_summary = Some(SummaryDocument {
        summary_id: format!("{sid}-post"),
        phase: Phase::Post,
        text: "after".into(),
        ratings: vec![rating("a1", 2), rating("a2", 2)],
    });
    s.docs_viewed = 3;
    s.state = SessionState::PostDone;
    s
}
