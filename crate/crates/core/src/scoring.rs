//! Per-item and per-subscale scores from raw questionnaire responses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::instruments::{Instrument, Item, ResponseKind, ScoringTransform};
use crate::model::{AnalysisConfig, ItemResponse, Session};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub instrument_id: String,
    pub subscale_id: String,
    /// On the centered scale for centered instruments, otherwise raw.
    pub mean: f64,
    /// Sample standard deviation of per-participant subscale scores; zero when n = 1.
    pub sd: f64,
    pub n: usize,
    pub per_item_means: BTreeMap<String, f64>,
}

/// All responses one participant gave to one instrument in one condition.
#[derive(Debug, Clone)]
pub struct Respondent<'a> {
    pub participant_id: &'a str,
    pub responses: Vec<&'a ItemResponse>,
}

impl<'a> Respondent<'a> {
    /// Collects a session's responses (both phases) to `instrument_id`.
    pub fn from_session(session: &'a Session, instrument_id: &str) -> Self {
        Respondent {
            participant_id: &session.participant_id,
            responses: session
                .all_responses()
                .filter(|r| r.instrument_id == instrument_id)
                .collect(),
        }
    }
}

/// Shift that maps a 1..=7 UEQ-S rating onto -3..=+3.
pub fn center_ueq(value: i32) -> Result<f64> {
    if !(1..=7).contains(&value) {
        return Err(Error::contract(format!(
            "UEQ-S value {value} outside 1..=7"
        )));
    }
    Ok(f64::from(value - 4))
}

/// Maps a transformed mean back onto the response scale.
pub fn to_response_scale(mean: f64, transform: ScoringTransform, config: &AnalysisConfig) -> f64 {
    match transform {
        ScoringTransform::Raw => mean,
        ScoringTransform::Centered => mean + config.scale_midpoint(),
    }
}

fn checked_item<'i>(
    instrument: &'i Instrument,
    r: &ItemResponse,
    config: Option<&AnalysisConfig>,
) -> Result<&'i Item> {
    if r.instrument_id != instrument.instrument_id {
        return Err(Error::contract(format!(
            "response for instrument `{}` passed to `{}`",
            r.instrument_id, instrument.instrument_id
        )));
    }
    let item = instrument.item(&r.item_id).ok_or_else(|| {
        Error::contract(format!(
            "item `{}` not in instrument `{}`",
            r.item_id, instrument.instrument_id
        ))
    })?;
    if item.kind != ResponseKind::Likert {
        return Err(Error::contract(format!(
            "item `{}` is not a Likert item",
            r.item_id
        )));
    }
    if let Some(config) = config {
        if !config.value_in_scale(r.value) {
            return Err(Error::contract(format!(
                "item `{}` value {} outside {}..={}",
                r.item_id, r.value, config.scale_min, config.scale_max
            )));
        }
    }
    Ok(item)
}

/// Arithmetic mean of raw values per item. Unanswered items are absent.
pub fn item_means<'a>(
    responses: impl IntoIterator<Item = &'a ItemResponse>,
    instrument: &Instrument,
) -> Result<BTreeMap<String, f64>> {
    let mut acc: BTreeMap<&str, (i64, usize)> = BTreeMap::new();
    for r in responses {
        let item = checked_item(instrument, r, None)?;
        let e = acc.entry(item.item_id.as_str()).or_default();
        e.0 += i64::from(r.value);
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(k, (sum, n))| (k.to_owned(), sum as f64 / n as f64))
        .collect())
}

/// Applies reverse coding (flip about the midpoint) and the instrument's transform.
fn transformed(value: i32, item: &Item, instrument: &Instrument, config: &AnalysisConfig) -> f64 {
    let value = if item.reverse_coded {
        config.scale_min + config.scale_max - value
    } else {
        value
    };
    let v = f64::from(value);
    match instrument.scoring_transform {
        ScoringTransform::Raw => v,
        ScoringTransform::Centered => v - config.scale_midpoint(),
    }
}

/// Per-participant subscale scores keyed by subscale then participant. A
/// participant's score is the mean over the member items they answered.
pub fn participant_scores(
    respondents: &[Respondent<'_>],
    instrument: &Instrument,
    config: &AnalysisConfig,
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let subscales = instrument.effective_subscales();
    for resp in respondents {
        let mut values: BTreeMap<&str, f64> = BTreeMap::new();
        for r in &resp.responses {
            let item = checked_item(instrument, r, Some(config))?;
            if values
                .insert(
                    &item.item_id,
                    transformed(r.value, item, instrument, config),
                )
                .is_some()
            {
                return Err(Error::contract(format!(
                    "participant `{}` answered `{}` twice",
                    resp.participant_id, item.item_id
                )));
            }
        }
        for (sub, members) in &subscales {
            let answered: Vec<f64> = members
                .iter()
                .filter_map(|m| values.get(m.as_str()).copied())
                .collect();
            if !answered.is_empty() {
                out.entry(sub.clone())
                    .or_default()
                    .insert(resp.participant_id.to_owned(), mean(&answered));
            }
        }
    }
    Ok(out)
}

/// Scores every subscale of a Likert instrument.
///
/// A subscale is reported only when each of its Likert members has at least
/// one response; a subscale with no answered members at all is an error.
pub fn subscale_scores(
    respondents: &[Respondent<'_>],
    instrument: &Instrument,
    config: &AnalysisConfig,
) -> Result<Vec<DimensionScore>> {
    if !instrument.is_likert() {
        return Err(Error::contract(format!(
            "instrument `{}` has no Likert items",
            instrument.instrument_id
        )));
    }
    let per_participant = participant_scores(respondents, instrument, config)?;

    let mut item_sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for resp in respondents {
        for r in &resp.responses {
            let item = checked_item(instrument, r, Some(config))?;
            let e = item_sums.entry(item.item_id.as_str()).or_default();
            e.0 += transformed(r.value, item, instrument, config);
            e.1 += 1;
        }
    }
    let item_mean = |id: &str| item_sums.get(id).map(|(s, n)| s / *n as f64);

    let mut scores = Vec::new();
    for (sub, members) in instrument.effective_subscales() {
        let likert: Vec<&String> = members
            .iter()
            .filter(|m| {
                instrument
                    .item(m)
                    .is_some_and(|i| i.kind == ResponseKind::Likert)
            })
            .collect();
        let means: BTreeMap<String, f64> = likert
            .iter()
            .filter_map(|m| item_mean(m).map(|v| ((*m).clone(), v)))
            .collect();
        if means.is_empty() {
            return Err(Error::EmptySubscale {
                instrument: instrument.instrument_id.clone(),
                subscale: sub,
            });
        }
        if means.len() < likert.len() {
            continue;
        }
        let ordered: Vec<f64> = likert.iter().map(|m| means[m.as_str()]).collect();
        let participants: Vec<f64> = per_participant
            .get(&sub)
            .map(|m| m.values().copied().collect())
            .unwrap_or_default();
        scores.push(DimensionScore {
            instrument_id: instrument.instrument_id.clone(),
            subscale_id: sub,
            mean: mean(&ordered),
            sd: sample_sd(&participants),
            n: participants.len(),
            per_item_means: means,
        });
    }
    Ok(scores)
}

/// Mean documents viewed per session; all sessions must share a condition.
pub fn docs_viewed_average(sessions: &[&Session]) -> Result<f64> {
    let first = sessions.first().ok_or(Error::NoSessions)?;
    if let Some(other) = sessions
        .iter()
        .find(|s| s.condition_id != first.condition_id)
    {
        return Err(Error::contract(format!(
            "sessions span conditions `{}` and `{}`",
            first.condition_id, other.condition_id
        )));
    }
    let total: u64 = sessions.iter().map(|s| u64::from(s.docs_viewed)).sum();
    Ok(total as f64 / sessions.len() as f64)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
