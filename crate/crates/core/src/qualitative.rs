//! Sentiment annotation of means, per-section tallies and two-rater agreement.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::model::AnalysisConfig;
pub use crate::model::Sentiment;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub target: String,
    pub sentiment: Sentiment,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTally {
    pub section: String,
    pub positive: usize,
    pub neutral: usize,
    pub negative: usize,
    pub flagged_for_improvement: bool,
}

impl SectionTally {
    pub fn total(&self) -> usize {
        self.positive + self.neutral + self.negative
    }
}

/// Above the neutral band is positive, below is negative, the closed band itself is neutral.
pub fn annotate_mean(mean: f64, config: &AnalysisConfig) -> Result<Sentiment> {
    let (lo, hi) = (config.scale_min as f64, config.scale_max as f64);
    if !(lo..=hi).contains(&mean) {
        return Err(Error::contract(format!(
            "mean {mean} outside scale [{lo}, {hi}]"
        )));
    }
    let band = config.neutral_band;
    Ok(if mean > band.upper {
        Sentiment::Positive
    } else if mean < band.lower {
        Sentiment::Negative
    } else {
        Sentiment::Neutral
    })
}

/// Counts sentiments per section and flags the section(s) with the most
/// negative dimensions. Sections named in `section_of` but with no
/// annotations still appear, with zero counts.
pub fn tally_sections(
    annotations: &[Annotation],
    section_of: &BTreeMap<String, String>,
) -> Result<Vec<SectionTally>> {
    let mut tallies: BTreeMap<&str, SectionTally> = section_of
        .values()
        .map(|s| {
            (
                s.as_str(),
                SectionTally {
                    section: s.clone(),
                    positive: 0,
                    neutral: 0,
                    negative: 0,
                    flagged_for_improvement: false,
                },
            )
        })
        .collect();
    let mut unmapped: Vec<String> = Vec::new();
    for a in annotations {
        let Some(section) = section_of.get(&a.target) else {
            unmapped.push(a.target.clone());
            continue;
        };
        let t = tallies
            .get_mut(section.as_str())
            .expect("section seeded from map");
        match a.sentiment {
            Sentiment::Positive => t.positive += 1,
            Sentiment::Neutral => t.neutral += 1,
            Sentiment::Negative => t.negative += 1,
        }
    }
    if !unmapped.is_empty() {
        unmapped.sort();
        unmapped.dedup();
        return Err(Error::UnmappedTargets(unmapped));
    }
    let worst = tallies.values().map(|t| t.negative).max().unwrap_or(0);
    let mut out: Vec<SectionTally> = tallies.into_values().collect();
    if worst > 0 {
        for t in out.iter_mut().filter(|t| t.negative == worst) {
            t.flagged_for_improvement = true;
        }
    }
    Ok(out)
}

/// Unweighted Cohen's kappa between two aligned rating lists.
pub fn cohen_kappa<T: Eq + Hash>(ratings_a: &[T], ratings_b: &[T]) -> Result<f64> {
    if ratings_a.len() != ratings_b.len() {
        return Err(Error::contract(format!(
            "rating lists differ in length ({} vs {})",
            ratings_a.len(),
            ratings_b.len()
        )));
    }
    if ratings_a.is_empty() {
        return Err(Error::contract("rating lists are empty"));
    }
    let n = ratings_a.len() as u64;
    let mut marginals: HashMap<&T, (u64, u64)> = HashMap::new();
    let mut agree = 0u64;
    for (a, b) in ratings_a.iter().zip(ratings_b) {
        marginals.entry(a).or_default().0 += 1;
        marginals.entry(b).or_default().1 += 1;
        if a == b {
            agree += 1;
        }
    }
    // kappa = (p_o - p_e) / (1 - p_e), scaled by n^2 to stay in integers
    let chance: u64 = marginals.values().map(|(x, y)| x * y).sum();
    let total = n * n;
    if chance == total {
        return Err(Error::KappaUndefined);
    }
    if agree == n {
        return Ok(1.0);
    }
    let num = (n * agree) as f64 - chance as f64;
    let den = total as f64 - chance as f64;
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Accept,
    ReAnnotate,
}

pub fn kappa_gate(kappa: f64, config: &AnalysisConfig) -> GateDecision {
    if kappa >= config.kappa_threshold {
        GateDecision::Accept
    } else {
        GateDecision::ReAnnotate
    }
}
