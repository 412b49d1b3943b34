//! Knowledge gain from pre- and post-search summaries.
//!
//! Each summary is scored by two annotators on fact quality (0..=3), fact
//! association (0..=2) and critique (0..=1). Study-wide Cohen's kappa per
//! dimension gates the use of their averaged scores; the post-minus-pre
//! difference is then classified against fixed thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::DimensionKappa;
use crate::model::{AnalysisConfig, Phase, RatingDimension, Session, SummaryRating};
use crate::qualitative::{cohen_kappa, kappa_gate, GateDecision};
use crate::scoring::mean;
use crate::{Error, Result};

/// Threshold on each delta; all three must be strictly exceeded.
pub const GAIN_THRESHOLDS: GainDeltas = GainDeltas {
    delta_dqual: 1.5,
    delta_dintrp: 1.0,
    delta_dcrit: 0.0,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRating {
    pub dqual: f64,
    pub dintrp: f64,
    pub dcrit: f64,
    pub kappa_per_dimension: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainDeltas {
    pub delta_dqual: f64,
    pub delta_dintrp: f64,
    pub delta_dcrit: f64,
}

impl GainDeltas {
    pub fn get(&self, dimension: RatingDimension) -> f64 {
        match dimension {
            RatingDimension::Dqual => self.delta_dqual,
            RatingDimension::Dintrp => self.delta_dintrp,
            RatingDimension::Dcrit => self.delta_dcrit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeGainResult {
    pub delta_dqual: f64,
    pub delta_dintrp: f64,
    pub delta_dcrit: f64,
    pub gain_over_50pct: bool,
}

impl KnowledgeGainResult {
    pub fn deltas(&self) -> GainDeltas {
        GainDeltas {
            delta_dqual: self.delta_dqual,
            delta_dintrp: self.delta_dintrp,
            delta_dcrit: self.delta_dcrit,
        }
    }
}

/// Study-wide per-dimension agreement over all doubly-rated summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyAgreement {
    pub rated_pairs: usize,
    /// `None` where kappa is undefined (both annotators constant on one category).
    pub kappa: BTreeMap<String, Option<f64>>,
}

impl StudyAgreement {
    pub fn as_dimension_kappas(&self) -> Vec<DimensionKappa> {
        RatingDimension::ALL
            .iter()
            .map(|d| DimensionKappa {
                dimension: d.name().to_owned(),
                kappa: self.kappa.get(d.name()).copied().flatten(),
            })
            .collect()
    }

    /// Fails with the kappa values when any defined kappa is below threshold.
    pub fn check_gate(&self, config: &AnalysisConfig) -> Result<()> {
        let failing = self
            .kappa
            .values()
            .flatten()
            .any(|k| kappa_gate(*k, config) == GateDecision::ReAnnotate);
        if failing {
            Err(Error::ReAnnotationRequired {
                kappas: self.as_dimension_kappas(),
            })
        } else {
            Ok(())
        }
    }
}

/// The two ratings of a summary, ordered by annotator id.
fn rating_pair(ratings: &[SummaryRating]) -> Result<Option<(&SummaryRating, &SummaryRating)>> {
    match ratings.len() {
        0 | 1 => Ok(None),
        2 => {
            let (a, b) = (&ratings[0], &ratings[1]);
            Ok(Some(if a.annotator_id <= b.annotator_id {
                (a, b)
            } else {
                (b, a)
            }))
        }
        n => Err(Error::contract(format!(
            "summary has {n} ratings; exactly two annotators are supported"
        ))),
    }
}

/// Computes per-dimension kappa across every summary that has two ratings.
/// Returns `None` when no summary is doubly rated.
pub fn study_agreement<'a>(
    sessions: impl IntoIterator<Item = &'a Session>,
) -> Result<Option<StudyAgreement>> {
    let mut first: Vec<&SummaryRating> = Vec::new();
    let mut second: Vec<&SummaryRating> = Vec::new();
    for s in sessions {
        for phase in [Phase::Pre, Phase::Post] {
            if let Some(summary) = s.summary(phase) {
                if let Some((a, b)) = rating_pair(&summary.ratings)? {
                    first.push(a);
                    second.push(b);
                }
            }
        }
    }
    if first.is_empty() {
        return Ok(None);
    }
    let mut kappa = BTreeMap::new();
    for d in RatingDimension::ALL {
        let a: Vec<u8> = first.iter().map(|r| r.score(d)).collect();
        let b: Vec<u8> = second.iter().map(|r| r.score(d)).collect();
        let k = match cohen_kappa(&a, &b) {
            Ok(k) => Some(k),
            Err(Error::KappaUndefined) => None,
            Err(e) => return Err(e),
        };
        kappa.insert(d.name().to_owned(), k);
    }
    Ok(Some(StudyAgreement {
        rated_pairs: first.len(),
        kappa,
    }))
}

/// Averages two annotators' scores, provided the study-wide agreement passes
/// the gate (or the gate is waived in `config`).
pub fn consensus(
    a: &SummaryRating,
    b: &SummaryRating,
    agreement: &StudyAgreement,
    config: &AnalysisConfig,
) -> Result<ConsensusRating> {
    if a.annotator_id == b.annotator_id {
        return Err(Error::contract(format!(
            "both ratings come from annotator `{}`",
            a.annotator_id
        )));
    }
    for r in [a, b] {
        if let Some(d) = r.out_of_range().first() {
            return Err(Error::contract(format!(
                "annotator `{}` {} = {} outside 0..={}",
                r.annotator_id,
                d.name(),
                r.score(*d),
                d.max()
            )));
        }
    }
    if !config.waive_kappa_gate {
        agreement.check_gate(config)?;
    }
    let avg = |d| (f64::from(a.score(d)) + f64::from(b.score(d))) / 2.0;
    Ok(ConsensusRating {
        dqual: avg(RatingDimension::Dqual),
        dintrp: avg(RatingDimension::Dintrp),
        dcrit: avg(RatingDimension::Dcrit),
        kappa_per_dimension: agreement.kappa.clone(),
    })
}

/// Dimension-wise `post - pre`; the classification flag is left unset.
pub fn gain_delta(pre: &ConsensusRating, post: &ConsensusRating) -> KnowledgeGainResult {
    KnowledgeGainResult {
        delta_dqual: post.dqual - pre.dqual,
        delta_dintrp: post.dintrp - pre.dintrp,
        delta_dcrit: post.dcrit - pre.dcrit,
        gain_over_50pct: false,
    }
}

/// True when every delta strictly exceeds its threshold.
pub fn classify_gain(deltas: &GainDeltas) -> bool {
    deltas.delta_dqual > GAIN_THRESHOLDS.delta_dqual
        && deltas.delta_dintrp > GAIN_THRESHOLDS.delta_dintrp
        && deltas.delta_dcrit > GAIN_THRESHOLDS.delta_dcrit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantGain {
    pub participant_id: String,
    pub session_id: String,
    pub pre: [f64; 3],
    pub post: [f64; 3],
    pub result: KnowledgeGainResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionGain {
    pub condition_id: String,
    pub n: usize,
    pub mean_deltas: GainDeltas,
    pub gained_count: usize,
    pub gained_fraction: f64,
    pub participants: Vec<ParticipantGain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortGain {
    pub agreement: StudyAgreement,
    pub gate_waived: bool,
    pub conditions: Vec<ConditionGain>,
}

impl CohortGain {
    pub fn condition(&self, condition_id: &str) -> Option<&ConditionGain> {
        self.conditions
            .iter()
            .find(|c| c.condition_id == condition_id)
    }

    /// Per-participant deltas of `dimension` for `condition_id`, keyed by participant.
    pub fn deltas(&self, condition_id: &str, dimension: RatingDimension) -> BTreeMap<String, f64> {
        self.condition(condition_id)
            .map(|c| {
                c.participants
                    .iter()
                    .map(|p| (p.participant_id.clone(), p.result.deltas().get(dimension)))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Deltas of participants present in both conditions, aligned by participant.
    pub fn paired_deltas(
        &self,
        condition_a: &str,
        condition_b: &str,
        dimension: RatingDimension,
    ) -> (Vec<f64>, Vec<f64>) {
        let a = self.deltas(condition_a, dimension);
        let b = self.deltas(condition_b, dimension);
        a.iter()
            .filter_map(|(p, x)| b.get(p).map(|y| (*x, *y)))
            .unzip()
    }
}

/// Knowledge-gain summary per condition for the given sessions.
///
/// Every session needs doubly-rated pre and post summaries. Conditions are
/// reported in the order given by `condition_ids`.
pub fn cohort_gain(
    sessions: &[&Session],
    condition_ids: &[String],
    config: &AnalysisConfig,
) -> Result<CohortGain> {
    let mut missing = Vec::new();
    for s in sessions {
        let complete = [Phase::Pre, Phase::Post].iter().all(|p| {
            s.summary(*p)
                .is_some_and(|sum| matches!(rating_pair(&sum.ratings), Ok(Some(_))))
        });
        if !complete {
            missing.push(s.session_id.clone());
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingRatings(missing));
    }
    let agreement = study_agreement(sessions.iter().copied())?.ok_or(Error::NoSessions)?;

    let mut conditions = Vec::new();
    for cond in condition_ids {
        let mut participants = Vec::new();
        for s in sessions.iter().filter(|s| &s.condition_id == cond) {
            let pair = |phase| -> Result<ConsensusRating> {
                let sum = s.summary(phase).expect("checked above");
                let (a, b) = rating_pair(&sum.ratings)?.expect("checked above");
                consensus(a, b, &agreement, config)
            };
            let pre = pair(Phase::Pre)?;
            let post = pair(Phase::Post)?;
            let mut result = gain_delta(&pre, &post);
            result.gain_over_50pct = classify_gain(&result.deltas());
            participants.push(ParticipantGain {
                participant_id: s.participant_id.clone(),
                session_id: s.session_id.clone(),
                pre: [pre.dqual, pre.dintrp, pre.dcrit],
                post: [post.dqual, post.dintrp, post.dcrit],
                result,
            });
        }
        participants.sort_by(|a, b| {
            (&a.participant_id, &a.session_id).cmp(&(&b.participant_id, &b.session_id))
        });
        let n = participants.len();
        let col = |d: RatingDimension| -> f64 {
            let v: Vec<f64> = participants
                .iter()
                .map(|p| p.result.deltas().get(d))
                .collect();
            if v.is_empty() {
                0.0
            } else {
                mean(&v)
            }
        };
        let gained_count = participants
            .iter()
            .filter(|p| p.result.gain_over_50pct)
            .count();
        conditions.push(ConditionGain {
            condition_id: cond.clone(),
            n,
            mean_deltas: GainDeltas {
                delta_dqual: col(RatingDimension::Dqual),
                delta_dintrp: col(RatingDimension::Dintrp),
                delta_dcrit: col(RatingDimension::Dcrit),
            },
            gained_count,
            gained_fraction: if n == 0 {
                0.0
            } else {
                gained_count as f64 / n as f64
            },
            participants,
        });
    }
    Ok(CohortGain {
        agreement,
        gate_waived: config.waive_kappa_gate,
        conditions,
    })
}
