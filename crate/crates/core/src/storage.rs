//! Study bundles on disk.
//!
//! One directory per study:
//!
//! ```text
//! <study_id>/
//!   study.json          design
//!   sessions.json       participants and session metadata
//!   responses.csv       one row per item response
//!   ratings.csv         one row per summary rating
//!   summaries/<id>.txt  summary texts
//!   annotations.csv     analyst sentiment labels (optional)
//!   instruments.json    instrument overrides (optional)
//! ```
//!
//! JSON is written with sorted keys, two-space indentation and a trailing
//! newline; CSV rows follow in-memory order. Saving then loading yields an
//! equal [`Study`].

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::instruments::{parse_overrides, ResponseKind};
use crate::model::*;
use crate::{Error, Result};

pub const STUDY_FILE: &str = "study.json";
pub const SESSIONS_FILE: &str = "sessions.json";
pub const RESPONSES_FILE: &str = "responses.csv";
pub const RATINGS_FILE: &str = "ratings.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const INSTRUMENTS_FILE: &str = "instruments.json";
pub const SUMMARIES_DIR: &str = "summaries";
pub const JOURNAL_FILE: &str = "journal.log";

pub const RESPONSES_HEADER: [&str; 9] = [
    "study_id",
    "session_id",
    "participant_id",
    "condition_id",
    "phase",
    "instrument_id",
    "item_id",
    "value",
    "timestamp_iso8601",
];
pub const RATINGS_HEADER: [&str; 7] = [
    "study_id",
    "session_id",
    "phase",
    "annotator_id",
    "dqual",
    "dintrp",
    "dcrit",
];
pub const ANNOTATIONS_HEADER: [&str; 5] = [
    "study_id",
    "condition_id",
    "target",
    "annotator_id",
    "sentiment",
];

/// Serializes with sorted keys, pretty-printed, LF-terminated.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("model types serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
    out.push('\n');
    out
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryRef {
    summary_id: String,
    phase: Phase,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRecord {
    session_id: String,
    participant_id: String,
    condition_id: String,
    #[serde(default)]
    topic: String,
    #[serde(default)]
    docs_viewed: u32,
    state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pre_summary: Option<SummaryRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    post_summary: Option<SummaryRef>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionsFile {
    #[serde(default)]
    participants: Vec<Participant>,
    #[serde(default)]
    sessions: Vec<SessionRecord>,
}

#[derive(Debug, Serialize)]
struct InstrumentsFile<'a> {
    instruments: &'a [crate::instruments::Instrument],
}

fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e))
}

/// Reads a bundle, checking syntax and per-row ranges but not cross-record
/// invariants. See [`load_study`] for the validated variant.
pub fn read_bundle(dir: &Path) -> Result<Study> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "study directory not found"),
        ));
    }
    let study_path = dir.join(STUDY_FILE);
    let design: StudyDesign = parse_json(&read_text(&study_path)?, &study_path)?;

    let benchmark_file = match &design.benchmark {
        Some(BenchmarkRef::File(rel)) => {
            let path = dir.join(rel);
            if !path.is_file() {
                return Err(Error::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "benchmark file not found"),
                ));
            }
            Some(parse_json::<BenchmarkSpec>(&read_text(&path)?, &path)?)
        }
        _ => None,
    };

    let inst_path = dir.join(INSTRUMENTS_FILE);
    let instrument_overrides = if inst_path.is_file() {
        parse_overrides(&read_text(&inst_path)?, &inst_path.display().to_string())?
    } else {
        Vec::new()
    };

    let sessions_path = dir.join(SESSIONS_FILE);
    let file: SessionsFile = parse_json(&read_text(&sessions_path)?, &sessions_path)?;
    let mut sessions = Vec::with_capacity(file.sessions.len());
    for rec in file.sessions {
        let mut s = Session::new(rec.session_id, rec.participant_id, rec.condition_id);
        s.topic = rec.topic;
        s.docs_viewed = rec.docs_viewed;
        s.state = rec.state;
        for (slot, r) in [
            (Phase::Pre, rec.pre_summary),
            (Phase::Post, rec.post_summary),
        ] {
            let Some(r) = r else { continue };
            if !is_safe_id(&r.summary_id) {
                return Err(Error::parse(
                    format!("{} session {}", sessions_path.display(), s.session_id),
                    format!("summary_id `{}` is not a safe file name", r.summary_id),
                ));
            }
            let text_path = dir
                .join(SUMMARIES_DIR)
                .join(format!("{}.txt", r.summary_id));
            let text = read_text(&text_path)?;
            *s.summary_mut(slot) = Some(SummaryDocument {
                summary_id: r.summary_id,
                phase: r.phase,
                text,
                ratings: Vec::new(),
            });
        }
        sessions.push(s);
    }

    let mut study = Study {
        design,
        participants: file.participants,
        sessions,
        analyst_annotations: Vec::new(),
        instrument_overrides,
        benchmark_file,
    };

    let responses_path = dir.join(RESPONSES_FILE);
    if responses_path.is_file() {
        let rows = parse_responses(&read_text(&responses_path)?, &responses_path, &study)?;
        for row in rows {
            let s = study
                .session_mut(&row.session_id)
                .expect("parse_responses checks session ids");
            s.responses_mut(row.phase).push(row.response);
        }
    }

    let ratings_path = dir.join(RATINGS_FILE);
    if ratings_path.is_file() {
        parse_ratings(&read_text(&ratings_path)?, &ratings_path, &mut study)?;
    }

    let ann_path = dir.join(ANNOTATIONS_FILE);
    if ann_path.is_file() {
        study.analyst_annotations = parse_annotations(&read_text(&ann_path)?, &ann_path, &study)?;
    }
    Ok(study)
}

/// Reads and fully validates a study bundle.
pub fn load_study(dir: &Path) -> Result<Study> {
    let study = read_bundle(dir)?;
    study.validate(&study.registry()).into_result()?;
    Ok(study)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str], path: &Path) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| Error::parse(format!("{} header", path.display()), e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            format!("{} header", path.display()),
            format!(
                "expected columns `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn row_location(path: &Path, record: &csv::StringRecord) -> String {
    let line = record.position().map(|p| p.line()).unwrap_or(0);
    format!("{} row {line}", path.display())
}

fn parse_int<T: std::str::FromStr>(field: &str, name: &str, loc: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(loc, format!("{name} `{field}` is not an integer")))
}

struct ResponseRow {
    session_id: String,
    phase: Phase,
    response: ItemResponse,
}

fn parse_responses(text: &str, path: &Path, study: &Study) -> Result<Vec<ResponseRow>> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &RESPONSES_HEADER, path)?;
    let config = &study.design.analysis;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let loc = row_location(path, &record);
        let f = |i: usize| record.get(i).unwrap_or("");
        if f(0) != study.design.study_id {
            return Err(Error::parse(
                &loc,
                format!(
                    "study_id `{}` does not match `{}`",
                    f(0),
                    study.design.study_id
                ),
            ));
        }
        let session = study
            .session(f(1))
            .ok_or_else(|| Error::parse(&loc, format!("unknown session_id `{}`", f(1))))?;
        if f(2) != session.participant_id {
            return Err(Error::parse(
                &loc,
                format!("participant_id `{}` does not match session", f(2)),
            ));
        }
        if f(3) != session.condition_id {
            return Err(Error::parse(
                &loc,
                format!("unknown condition_id `{}` for session", f(3)),
            ));
        }
        let phase: Phase = f(4).parse().map_err(|e: String| Error::parse(&loc, e))?;
        let value: i32 = parse_int(f(7), "value", &loc)?;
        if !config.value_in_scale(value) {
            return Err(Error::parse(
                &loc,
                format!(
                    "value {value} outside scale {}..={}",
                    config.scale_min, config.scale_max
                ),
            ));
        }
        out.push(ResponseRow {
            session_id: session.session_id.clone(),
            phase,
            response: ItemResponse {
                instrument_id: f(5).to_owned(),
                item_id: f(6).to_owned(),
                value,
                timestamp: f(8).to_owned(),
            },
        });
    }
    Ok(out)
}

fn parse_ratings(text: &str, path: &Path, study: &mut Study) -> Result<()> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &RATINGS_HEADER, path)?;
    let study_id = study.design.study_id.clone();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let loc = row_location(path, &record);
        let f = |i: usize| record.get(i).unwrap_or("");
        if f(0) != study_id {
            return Err(Error::parse(
                &loc,
                format!("study_id `{}` does not match `{study_id}`", f(0)),
            ));
        }
        let phase: Phase = f(2).parse().map_err(|e: String| Error::parse(&loc, e))?;
        let rating = SummaryRating {
            annotator_id: f(3).to_owned(),
            dqual: parse_int(f(4), "dqual", &loc)?,
            dintrp: parse_int(f(5), "dintrp", &loc)?,
            dcrit: parse_int(f(6), "dcrit", &loc)?,
        };
        if let Some(d) = rating.out_of_range().first() {
            return Err(Error::parse(
                &loc,
                format!(
                    "{} = {} outside 0..={}",
                    d.name(),
                    rating.score(*d),
                    d.max()
                ),
            ));
        }
        let session = study
            .session_mut(f(1))
            .ok_or_else(|| Error::parse(&loc, format!("unknown session_id `{}`", f(1))))?;
        let summary = session
            .summary_mut(phase)
            .as_mut()
            .ok_or_else(|| Error::parse(&loc, format!("session has no {phase} summary")))?;
        summary.ratings.push(rating);
    }
    Ok(())
}

fn parse_annotations(text: &str, path: &Path, study: &Study) -> Result<Vec<AnalystAnnotation>> {
    let mut reader = csv_reader(text);
    check_header(&mut reader, &ANNOTATIONS_HEADER, path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let loc = row_location(path, &record);
        let f = |i: usize| record.get(i).unwrap_or("");
        if f(0) != study.design.study_id {
            return Err(Error::parse(
                &loc,
                format!("study_id `{}` does not match", f(0)),
            ));
        }
        out.push(AnalystAnnotation {
            condition_id: f(1).to_owned(),
            target: f(2).to_owned(),
            annotator_id: f(3).to_owned(),
            sentiment: f(4).parse().map_err(|e: String| Error::parse(&loc, e))?,
        });
    }
    Ok(out)
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Renders every file of a bundle as (relative path, contents).
pub fn bundle_files(study: &Study) -> Result<BTreeMap<PathBuf, String>> {
    let mut files = BTreeMap::new();
    let sid = &study.design.study_id;
    files.insert(PathBuf::from(STUDY_FILE), canonical_json(&study.design));

    let mut records = Vec::new();
    let mut responses = Vec::new();
    let mut ratings = Vec::new();
    for s in &study.sessions {
        let summary_ref = |phase: Phase| {
            s.summary(phase).map(|d| SummaryRef {
                summary_id: d.summary_id.clone(),
                phase: d.phase,
            })
        };
        records.push(SessionRecord {
            session_id: s.session_id.clone(),
            participant_id: s.participant_id.clone(),
            condition_id: s.condition_id.clone(),
            topic: s.topic.clone(),
            docs_viewed: s.docs_viewed,
            state: s.state,
            pre_summary: summary_ref(Phase::Pre),
            post_summary: summary_ref(Phase::Post),
        });
        for phase in [Phase::Pre, Phase::Post] {
            for r in s.responses(phase) {
                responses.push(vec![
                    sid.clone(),
                    s.session_id.clone(),
                    s.participant_id.clone(),
                    s.condition_id.clone(),
                    phase.to_string(),
                    r.instrument_id.clone(),
                    r.item_id.clone(),
                    r.value.to_string(),
                    r.timestamp.clone(),
                ]);
            }
            if let Some(doc) = s.summary(phase) {
                if !is_safe_id(&doc.summary_id) {
                    return Err(Error::contract(format!(
                        "summary_id `{}` is not a safe file name",
                        doc.summary_id
                    )));
                }
                files.insert(
                    Path::new(SUMMARIES_DIR).join(format!("{}.txt", doc.summary_id)),
                    doc.text.clone(),
                );
                for r in &doc.ratings {
                    ratings.push(vec![
                        sid.clone(),
                        s.session_id.clone(),
                        phase.to_string(),
                        r.annotator_id.clone(),
                        r.dqual.to_string(),
                        r.dintrp.to_string(),
                        r.dcrit.to_string(),
                    ]);
                }
            }
        }
    }
    let sessions_file = SessionsFile {
        participants: study.participants.clone(),
        sessions: records,
    };
    files.insert(PathBuf::from(SESSIONS_FILE), canonical_json(&sessions_file));
    files.insert(
        PathBuf::from(RESPONSES_FILE),
        csv_string(&RESPONSES_HEADER, responses),
    );
    files.insert(
        PathBuf::from(RATINGS_FILE),
        csv_string(&RATINGS_HEADER, ratings),
    );
    if !study.analyst_annotations.is_empty() {
        let rows = study.analyst_annotations.iter().map(|a| {
            vec![
                sid.clone(),
                a.condition_id.clone(),
                a.target.clone(),
                a.annotator_id.clone(),
                a.sentiment.as_str().to_owned(),
            ]
        });
        files.insert(
            PathBuf::from(ANNOTATIONS_FILE),
            csv_string(&ANNOTATIONS_HEADER, rows),
        );
    }
    if !study.instrument_overrides.is_empty() {
        files.insert(
            PathBuf::from(INSTRUMENTS_FILE),
            canonical_json(&InstrumentsFile {
                instruments: &study.instrument_overrides,
            }),
        );
    }
    if let (Some(BenchmarkRef::File(rel)), Some(spec)) =
        (&study.design.benchmark, &study.benchmark_file)
    {
        let rel = Path::new(rel);
        if rel.is_absolute()
            || rel
                .components()
                .any(|c| matches!(c, std::path::Component::ParentDir))
        {
            return Err(Error::contract(format!(
                "benchmark path `{}` must stay inside the study directory",
                rel.display()
            )));
        }
        files.insert(rel.to_path_buf(), canonical_json(spec));
    }
    Ok(files)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Validates, then writes the bundle into `dir`. Nothing is written when
/// validation fails.
pub fn write_bundle(dir: &Path, study: &Study) -> Result<()> {
    study.validate(&study.registry()).into_result()?;
    if !is_safe_id(&study.design.study_id) {
        return Err(Error::contract(format!(
            "study_id `{}` is not a safe directory name",
            study.design.study_id
        )));
    }
    let files = bundle_files(study)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (rel, contents) in &files {
        write_atomic(&dir.join(rel), contents.as_bytes())?;
    }
    Ok(())
}

/// Appends the rows of a form-export CSV to the study's responses.
///
/// All rows are checked before any is committed; on error the study is
/// left untouched.
pub fn import_responses_csv(path: &Path, study: &mut Study) -> Result<usize> {
    let text = read_text(path)?;
    let rows = parse_responses(&text, path, study)?;
    let registry = study.registry();

    let mut staged = study.clone();
    let mut lines = csv_reader(&text).into_records().map(|r| {
        r.ok()
            .and_then(|r| r.position().map(|p| p.line()))
            .unwrap_or(0)
    });
    for row in &rows {
        let line = lines.next().unwrap_or(0);
        let loc = format!("{} row {line}", path.display());
        let r = &row.response;
        if !staged.design.instruments.contains(&r.instrument_id) {
            return Err(Error::parse(
                &loc,
                format!("instrument `{}` is not part of the study", r.instrument_id),
            ));
        }
        let item = registry.item(&r.instrument_id, &r.item_id).ok_or_else(|| {
            Error::parse(
                &loc,
                format!("unknown item_id `{}/{}`", r.instrument_id, r.item_id),
            )
        })?;
        if item.kind != ResponseKind::Likert {
            return Err(Error::parse(
                &loc,
                format!("item `{}` is not rated on the Likert scale", r.item_id),
            ));
        }
        if item.phase != row.phase {
            return Err(Error::parse(
                &loc,
                format!("item `{}` belongs to phase {}", r.item_id, item.phase),
            ));
        }
        if chrono::DateTime::parse_from_rfc3339(&r.timestamp).is_err() {
            return Err(Error::parse(
                &loc,
                format!("`{}` is not an ISO-8601 timestamp", r.timestamp),
            ));
        }
        let session = staged
            .session_mut(&row.session_id)
            .expect("checked by parse");
        let duplicate = session
            .all_responses()
            .any(|x| x.instrument_id == r.instrument_id && x.item_id == r.item_id);
        if duplicate {
            return Err(Error::parse(
                &loc,
                format!(
                    "duplicate response for session `{}` item `{}/{}`",
                    row.session_id, r.instrument_id, r.item_id
                ),
            ));
        }
        session.responses_mut(row.phase).push(r.clone());
    }
    staged.validate(&registry).into_result()?;
    *study = staged;
    Ok(rows.len())
}

/// A directory of study bundles with a write journal.
///
/// Writes to one study are serialized; different studies may be written
/// concurrently. Readers never take the write lock.
pub struct StudyStore {
    root: PathBuf,
    index: RwLock<BTreeMap<String, PathBuf>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    journal: Mutex<File>,
}

impl StudyStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let journal_path = root.join(JOURNAL_FILE);
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| Error::io(&journal_path, e))?;
        let mut index = BTreeMap::new();
        for entry in fs::read_dir(&root).map_err(|e| Error::io(&root, e))? {
            let entry = entry.map_err(|e| Error::io(&root, e))?;
            let path = entry.path();
            if path.join(STUDY_FILE).is_file() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    index.insert(name.to_owned(), path);
                }
            }
        }
        Ok(StudyStore {
            root,
            index: RwLock::new(index),
            locks: Mutex::new(HashMap::new()),
            journal: Mutex::new(journal),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn study_dir(&self, study_id: &str) -> PathBuf {
        self.root.join(study_id)
    }

    pub fn contains(&self, study_id: &str) -> bool {
        self.index
            .read()
            .expect("index lock")
            .contains_key(study_id)
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.index
            .read()
            .expect("index lock")
            .keys()
            .cloned()
            .collect()
    }

    fn lock_for(&self, study_id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(study_id.to_owned())
            .or_default()
            .clone()
    }

    fn journal(&self, line: &str) -> Result<()> {
        let mut j = self.journal.lock().expect("journal lock");
        writeln!(j, "{line}").map_err(|e| Error::io(self.root.join(JOURNAL_FILE), e))?;
        j.sync_data()
            .map_err(|e| Error::io(self.root.join(JOURNAL_FILE), e))
    }

    pub fn load(&self, study_id: &str) -> Result<Study> {
        load_study(&self.study_dir(study_id))
    }

    /// Validates and durably writes `study`.
    pub fn save(&self, study: &Study) -> Result<()> {
        let id = &study.design.study_id;
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("study lock");
        let dir = self.study_dir(id);
        write_bundle(&dir, study)?;
        self.index
            .write()
            .expect("index lock")
            .insert(id.clone(), dir);
        self.journal(&format!("save {id}"))
    }

    /// Like [`StudyStore::save`], but fails with [`Error::AlreadyExists`]
    /// when a study with the same id is already stored.
    pub fn create(&self, study: &Study) -> Result<()> {
        let id = &study.design.study_id;
        let lock = self.lock_for(id);
        let _guard = lock.lock().expect("study lock");
        let dir = self.study_dir(id);
        if self.contains(id) || dir.join(STUDY_FILE).exists() {
            return Err(Error::AlreadyExists(id.clone()));
        }
        write_bundle(&dir, study)?;
        self.index
            .write()
            .expect("index lock")
            .insert(id.clone(), dir);
        self.journal(&format!("create {id}"))
    }

    /// Runs `f` on the stored study under the study's write lock and saves
    /// the result if `f` succeeds.
    pub fn update<T>(&self, study_id: &str, f: impl FnOnce(&mut Study) -> Result<T>) -> Result<T> {
        let lock = self.lock_for(study_id);
        let _guard = lock.lock().expect("study lock");
        let dir = self.study_dir(study_id);
        let mut study = load_study(&dir)?;
        let out = f(&mut study)?;
        write_bundle(&dir, &study)?;
        self.journal(&format!("update {study_id}"))?;
        Ok(out)
    }

    pub fn import_responses_csv(&self, study_id: &str, path: &Path) -> Result<usize> {
        let n = self.update(study_id, |s| import_responses_csv(path, s))?;
        self.journal(&format!("import {study_id} {n}"))?;
        Ok(n)
    }

    /// Records a clean shutdown in the journal.
    pub fn close(&self) -> Result<()> {
        self.journal("close")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{comparative_design, complete_session};

    fn study() -> Study {
        let design = comparative_design();
        let reg = crate::InstrumentRegistry::builtin();
        let mut s = Study::new(design.clone());
        for p in 0..2 {
            s.participants.push(Participant {
                participant_id: format!("p{p}"),
                demographics: [("age_band".to_string(), "25-34".to_string())].into(),
            });
            for (k, c) in ["conv", "web"].iter().enumerate() {
                s.sessions.push(complete_session(
                    &reg,
                    &design,
                    &format!("s{p}{k}"),
                    &format!("p{p}"),
                    c,
                    4 + k as i32,
                ));
            }
        }
        s
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = study();
        write_bundle(dir.path(), &s).unwrap();
        let back = load_study(dir.path()).unwrap();
        assert_eq!(back, s);
        let again = bundle_files(&back).unwrap();
        assert_eq!(again, bundle_files(&s).unwrap());
    }

    #[test]
    fn responses_header_exact() {
        let files = bundle_files(&study()).unwrap();
        let csv = &files[Path::new(RESPONSES_FILE)];
        assert!(csv.starts_with(
            "study_id,session_id,participant_id,condition_id,phase,instrument_id,item_id,value,timestamp_iso8601\n"
        ));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn out_of_range_row_named() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &study()).unwrap();
        let path = dir.path().join(RESPONSES_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let mut cols: Vec<String> = lines[3].split(',').map(str::to_owned).collect();
        cols[7] = "8".into();
        lines[3] = cols.join(",");
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let err = load_study(dir.path()).unwrap_err().to_string();
        assert!(err.contains("row 4"), "{err}");
        assert!(err.contains("value 8"), "{err}");
    }

    #[test]
    fn unknown_condition_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = study();
        write_bundle(dir.path(), &s).unwrap();
        s.design.conditions[1].condition_id = "other".into();
        fs::write(dir.path().join(STUDY_FILE), canonical_json(&s.design)).unwrap();
        let err = load_study(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown condition_id"), "{err}");
    }

    #[test]
    fn invalid_study_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = study();
        s.design.conditions.pop();
        let target = dir.path().join("x");
        assert!(matches!(
            write_bundle(&target, &s),
            Err(Error::Validation(_))
        ));
        assert!(!target.exists());
    }

    #[test]
    fn malformed_json_has_line() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &study()).unwrap();
        fs::write(
            dir.path().join(STUDY_FILE),
            "{\n  \"study_id\": \"demo\",\n  oops\n}",
        )
        .unwrap();
        let err = load_study(dir.path()).unwrap_err().to_string();
        assert!(err.contains("study.json:3:"), "{err}");
    }

    #[test]
    fn store_journals_saves() {
        let dir = tempfile::tempdir().unwrap();
        let store = StudyStore::open(dir.path()).unwrap();
        store.save(&study()).unwrap();
        store.close().unwrap();
        let reopened = StudyStore::open(dir.path()).unwrap();
        assert_eq!(reopened.study_ids(), ["demo"]);
        let journal = fs::read_to_string(dir.path().join(JOURNAL_FILE)).unwrap();
        assert_eq!(journal, "save demo\nclose\n");
    }
}
