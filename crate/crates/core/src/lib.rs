//! Administration and analysis of conversational-search user studies.
//!
//! A study collects pre- and post-search questionnaires and summaries from
//! participants using one or two search interfaces. Exploration instruments
//! (PSSUQ, UEQ-S, NASA-TLX) measure usability, experience and workload;
//! Contentment instruments (search-as-learning, knowledge gain) measure
//! learning. [`report::analyze`] turns a stored study into scores, sentiment
//! annotations, significance tests and knowledge-gain classifications.

pub mod error;
pub mod instruments;
pub mod knowledge_gain;
pub mod model;
pub mod qualitative;
pub mod report;
pub mod scoring;
#[cfg(feature = "server")]
pub mod service;
pub mod stats;
pub mod storage;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use instruments::{builtin_registry, Instrument, InstrumentRegistry};
pub use model::{AnalysisConfig, Session, Study, StudyDesign, StudyMode};
pub use report::{analyze, render, AnalysisReport, ReportFormat};

/// Generator string embedded in every report.
pub const GENERATOR: &str = concat!("iecsi ", env!("CARGO_PKG_VERSION"));
