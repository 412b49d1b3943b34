//! Seeded synthetic studies for demos, fixtures and calibration runs.
//!
//! Each Likert response is `round(base + u_p + e)` clamped to the scale,
//! where `u_p` is a per-participant offset and `e` item noise, both standard
//! normal. In comparative mode the two condition bases sit `effect` apart
//! around the scale midpoint, so `effect = 0` is the null hypothesis.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::instruments::{ResponseKind, CANONICAL_ORDER, PSSUQ, UEQ_S};
use crate::model::{
    AnalysisConfig, Bands, BenchmarkEntry, BenchmarkRef, BenchmarkSpec, InterfaceCondition,
    InterfaceKind, ItemResponse, Participant, Phase, ReferenceStats, Session, SessionState, Study,
    StudyDesign, StudyMode, SummaryDocument, SummaryRating,
};
use crate::{Error, Result};

pub const BENCHMARK_FILE: &str = "benchmark.json";
const TIMESTAMP_DAY: &str = "2024-03-01";
const TOPICS: [&str; 4] = [
    "renewable energy storage",
    "history of cartography",
    "sleep and memory",
    "urban heat islands",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub participants: usize,
    pub mode: StudyMode,
    /// Separation of the two condition means, in scale points.
    pub effect: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            participants: 12,
            mode: StudyMode::Comparative,
            effect: 1.0,
            seed: 1,
        }
    }
}

fn design(opts: &SynthOptions) -> StudyDesign {
    let conv = InterfaceCondition {
        condition_id: "conv".into(),
        kind: InterfaceKind::Conversational,
        label: "conversational assistant".into(),
    };
    let web = InterfaceCondition {
        condition_id: "web".into(),
        kind: InterfaceKind::Conventional,
        label: "ranked result list".into(),
    };
    let (conditions, benchmark) = match opts.mode {
        StudyMode::Comparative => (vec![conv, web], None),
        StudyMode::BenchmarkOnly => (vec![conv], Some(BenchmarkRef::File(BENCHMARK_FILE.into()))),
    };
    StudyDesign {
        study_id: format!("synth-{}", opts.seed),
        mode: opts.mode,
        conditions,
        instruments: CANONICAL_ORDER.iter().map(|s| s.to_string()).collect(),
        analysis: AnalysisConfig::default(),
        benchmark,
    }
}

/// Benchmark shipped with benchmark-mode studies.
pub fn benchmark_spec() -> BenchmarkSpec {
    let mut measures = BTreeMap::new();
    measures.insert(
        format!("{PSSUQ}/OVERALL"),
        BenchmarkEntry {
            mu: Some(4.0),
            reference: Some(ReferenceStats {
                mean: 4.0,
                sd: 1.2,
                n: 40,
            }),
            ..Default::default()
        },
    );
    measures.insert(
        format!("{PSSUQ}/SYSUSE"),
        BenchmarkEntry {
            mu: Some(4.0),
            sample: Some(vec![3.5, 4.0, 4.5, 3.0, 5.0, 4.25, 3.75, 4.0]),
            ..Default::default()
        },
    );
    let ueq_bands = Bands {
        edges: vec![-3.0, -0.5, 0.8, 1.5, 3.0],
        labels: vec![
            "bad".into(),
            "below average".into(),
            "above average".into(),
            "excellent".into(),
        ],
    };
    for sub in ["pragmatic", "hedonic", "overall"] {
        measures.insert(
            format!("{UEQ_S}/{sub}"),
            BenchmarkEntry {
                mu: Some(0.0),
                bands: Some(ueq_bands.clone()),
                ..Default::default()
            },
        );
    }
    BenchmarkSpec { measures }
}

fn timestamp(minute: usize) -> String {
    format!(
        "{TIMESTAMP_DAY}T{:02}:{:02}:00Z",
        9 + minute / 60 % 12,
        minute % 60
    )
}

/// Builds a synthetic study. Identical options give identical studies.
pub fn generate(opts: &SynthOptions) -> Result<Study> {
    if opts.participants < 2 {
        return Err(Error::contract(format!(
            "synthetic studies need at least 2 participants, got {}",
            opts.participants
        )));
    }
    if !opts.effect.is_finite() {
        return Err(Error::contract("effect must be finite"));
    }
    let design = design(opts);
    let registry = crate::instruments::builtin_registry();
    let config = design.analysis.clone();
    let mid = config.scale_midpoint();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut study = Study::new(design.clone());
    if opts.mode == StudyMode::BenchmarkOnly {
        study.benchmark_file = Some(benchmark_spec());
    }
    let bases: Vec<(String, f64)> = match opts.mode {
        StudyMode::Comparative => vec![
            ("conv".into(), mid + opts.effect / 2.0),
            ("web".into(), mid - opts.effect / 2.0),
        ],
        StudyMode::BenchmarkOnly => vec![("conv".into(), mid + opts.effect)],
    };
    let width = opts.participants.to_string().len().max(2);
    for p in 0..opts.participants {
        let pid = format!("p{:0width$}", p + 1);
        let age = ["18-24", "25-34", "35-44", "45-54"][rng.random_range(0..4)];
        let experience = ["low", "medium", "high"][rng.random_range(0..3)];
        let agent = if rng.random_bool(0.5) { "yes" } else { "no" };
        study.participants.push(Participant {
            participant_id: pid.clone(),
            demographics: BTreeMap::from([
                ("age_band".to_owned(), age.to_owned()),
                ("conversational_agent_use".to_owned(), agent.to_owned()),
                ("search_experience".to_owned(), experience.to_owned()),
            ]),
        });
        let offset: f64 = std_normal.sample(&mut rng);
        for (ci, (cond, base)) in bases.iter().enumerate() {
            let sid = format!("{pid}-{cond}");
            let mut s = Session::new(&sid, &pid, cond);
            s.topic = TOPICS[(p + ci) % TOPICS.len()].to_owned();
            let mut minute = (p * bases.len() + ci) * 20;
            for id in &design.instruments {
                let inst = registry.get(id).expect("builtin instrument");
                for item in inst.items.iter().filter(|i| i.kind == ResponseKind::Likert) {
                    let raw = base + offset + std_normal.sample(&mut rng);
                    let value = (raw.round() as i32).clamp(config.scale_min, config.scale_max);
                    minute += 1;
                    s.responses_mut(item.phase).push(ItemResponse {
                        instrument_id: id.clone(),
                        item_id: item.item_id.clone(),
                        value,
                        timestamp: timestamp(minute),
                    });
                }
            }
            s.docs_viewed = rng.random_range(1..=9);

            // planted knowledge gain: roughly half the sessions gain on every dimension
            let pre = [rng.random_range(0..=1u8), 0, 0];
            let post = if rng.random_bool(0.5) {
                [3, 2, 1]
            } else {
                [(pre[0] + 1).min(3), 1, 0]
            };
            let rate = |scores: [u8; 3]| {
                ["a1", "a2"]
                    .iter()
                    .map(|a| SummaryRating {
                        annotator_id: (*a).to_owned(),
                        dqual: scores[0],
                        dintrp: scores[1],
                        dcrit: scores[2],
                    })
                    .collect::<Vec<_>>()
            };
            s.pre_summary = Some(SummaryDocument {
                summary_id: format!("{sid}-pre"),
                phase: Phase::Pre,
                text: format!("What {pid} knew about {} before searching.", s.topic),
                ratings: rate(pre),
            });
            s.post_summary = Some(SummaryDocument {
                summary_id: format!("{sid}-post"),
                phase: Phase::Post,
                text: format!("What {pid} learned about {} while searching.", s.topic),
                ratings: rate(post),
            });
            s.state = SessionState::PostDone;
            study.sessions.push(s);
        }
    }
    Ok(study)
}

/// Generates a study and writes it as a bundle into `dir`.
pub fn write(opts: &SynthOptions, dir: &std::path::Path) -> Result<Study> {
    let study = generate(opts)?;
    crate::storage::write_bundle(dir, &study)?;
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let opts = SynthOptions::default();
        let a = generate(&opts).unwrap();
        assert_eq!(a, generate(&opts).unwrap());
        assert!(
            a.validate(&a.registry()).is_empty(),
            "{}",
            a.validate(&a.registry())
        );
        assert_eq!(a.sessions.len(), 24);
        let b = generate(&SynthOptions { seed: 2, ..opts }).unwrap();
        assert_ne!(a.sessions, b.sessions);
    }

    #[test]
    fn benchmark_mode_valid_and_analyzable() {
        let opts = SynthOptions {
            mode: StudyMode::BenchmarkOnly,
            participants: 8,
            ..Default::default()
        };
        let s = generate(&opts).unwrap();
        assert!(s.validate(&s.registry()).is_empty());
        let r = crate::analyze(&s).unwrap();
        assert!(r
            .tests
            .iter()
            .all(|m| m.tests.iter().all(|t| !t.test.is_dependent())));
    }

    #[test]
    fn rejects_single_participant() {
        let opts = SynthOptions {
            participants: 1,
            ..Default::default()
        };
        assert!(generate(&opts).is_err());
    }

    #[test]
    fn effect_moves_condition_means() {
        let opts = SynthOptions {
            participants: 30,
            effect: 2.0,
            ..Default::default()
        };
        let r = crate::analyze(&generate(&opts).unwrap()).unwrap();
        let m = |c: &str| r.condition(c).unwrap().score("PSSUQ/OVERALL").unwrap().mean;
        assert!(m("conv") - m("web") > 1.0);
    }
}
