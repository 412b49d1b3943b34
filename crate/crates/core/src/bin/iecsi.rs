//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 data or analysis error, 2 usage error,
//! 3 inter-rater agreement gate failed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use iecsi::knowledge_gain::study_agreement;
use iecsi::model::{Sentiment, StudyMode};
use iecsi::qualitative::cohen_kappa;
use iecsi::report::analyze_with;
use iecsi::service::AppState;
use iecsi::storage::load_study;
use iecsi::synth::{self, SynthOptions};
use iecsi::{render, Error, ReportFormat};

const EXIT_DATA: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_GATE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "iecsi",
    version,
    about = "Run and analyze conversational-search user studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Structured,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Comparative,
    Benchmark,
}

#[derive(Subcommand)]
enum Command {
    /// Load a study directory and report every invariant violation.
    Validate { study_dir: PathBuf },
    /// Run the full analysis and write the report.
    Analyze {
        study_dir: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "structured")]
        format: Format,
        /// Proceed with knowledge gain even if annotator agreement is below threshold.
        #[arg(long)]
        waive_kappa_gate: bool,
    },
    /// Print inter-rater agreement for summary ratings and analyst annotations.
    Kappa { study_dir: PathBuf },
    /// Write a seeded synthetic study.
    Synth {
        #[arg(long)]
        participants: usize,
        #[arg(long, value_enum, default_value = "comparative")]
        mode: Mode,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        effect: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API over a store root until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        data: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { study_dir } => validate(&study_dir),
        Command::Analyze {
            study_dir,
            out,
            format,
            waive_kappa_gate,
        } => analyze(&study_dir, out.as_deref(), format, waive_kappa_gate),
        Command::Kappa { study_dir } => kappa(&study_dir),
        Command::Synth {
            participants,
            mode,
            effect,
            seed,
            out,
        } => synthesize(participants, mode, effect, seed, &out),
        Command::Serve { addr, data } => serve(&addr, &data),
    }
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn failure(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_gating_failure() {
        ExitCode::from(EXIT_GATE)
    } else {
        ExitCode::from(EXIT_DATA)
    }
}

fn require_dir(dir: &Path) -> Result<(), ExitCode> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("{} is not a directory", dir.display())))
    }
}

fn validate(dir: &Path) -> ExitCode {
    if let Err(code) = require_dir(dir) {
        return code;
    }
    match load_study(dir) {
        Ok(study) => {
            println!(
                "{}: valid ({} participants, {} sessions)",
                study.design.study_id,
                study.participants.len(),
                study.sessions.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => failure(&e),
    }
}

fn analyze(dir: &Path, out: Option<&Path>, format: Format, waive: bool) -> ExitCode {
    if let Err(code) = require_dir(dir) {
        return code;
    }
    let result = load_study(dir).and_then(|study| {
        let mut config = study.design.analysis.clone();
        config.waive_kappa_gate |= waive;
        analyze_with(&study, &config)
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => return failure(&e),
    };
    let format = match format {
        Format::Structured => ReportFormat::Structured,
        Format::Markdown => ReportFormat::Markdown,
    };
    let text = render(&report, format);
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_DATA);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::SUCCESS
}

fn fmt_kappa(k: Option<f64>) -> String {
    k.map_or_else(|| "undefined".to_owned(), |k| format!("{k:?}"))
}

fn kappa(dir: &Path) -> ExitCode {
    if let Err(code) = require_dir(dir) {
        return code;
    }
    let study = match load_study(dir) {
        Ok(s) => s,
        Err(e) => return failure(&e),
    };
    let config = &study.design.analysis;
    match study_agreement(&study.sessions) {
        Ok(None) => println!("summary ratings: insufficient annotators"),
        Ok(Some(a)) => {
            let verdict = if a.check_gate(config).is_ok() {
                "pass"
            } else {
                "fail"
            };
            println!(
                "summary ratings: {} doubly-rated summaries, gate {verdict} at {}",
                a.rated_pairs, config.kappa_threshold
            );
            for (dim, k) in &a.kappa {
                println!("  {dim} {}", fmt_kappa(*k));
            }
        }
        Err(e) => return failure(&e),
    }

    // analyst sentiment labels, paired by (condition, target)
    let annotators: BTreeSet<&str> = study
        .analyst_annotations
        .iter()
        .map(|a| a.annotator_id.as_str())
        .collect();
    if annotators.len() > 2 {
        eprintln!(
            "error: analyst annotations from {} annotators; exactly two are supported",
            annotators.len()
        );
        return ExitCode::from(EXIT_DATA);
    }
    let mut by_target: BTreeMap<(&str, &str), BTreeMap<&str, Sentiment>> = BTreeMap::new();
    for a in &study.analyst_annotations {
        by_target
            .entry((&a.condition_id, &a.target))
            .or_default()
            .insert(&a.annotator_id, a.sentiment);
    }
    let pairs: Vec<(Sentiment, Sentiment)> = by_target
        .values()
        .filter(|m| m.len() == 2)
        .map(|m| {
            let mut v = m.values();
            (*v.next().expect("two"), *v.next().expect("two"))
        })
        .collect();
    if pairs.is_empty() {
        println!("analyst annotations: insufficient annotators");
    } else {
        let (a, b): (Vec<Sentiment>, Vec<Sentiment>) = pairs.into_iter().unzip();
        let k = match cohen_kappa(&a, &b) {
            Ok(k) => Some(k),
            Err(Error::KappaUndefined) => None,
            Err(e) => return failure(&e),
        };
        println!("analyst annotations: {} doubly-labelled targets", a.len());
        println!("  sentiment {}", fmt_kappa(k));
    }
    ExitCode::SUCCESS
}

fn synthesize(participants: usize, mode: Mode, effect: f64, seed: u64, out: &Path) -> ExitCode {
    if participants < 2 {
        return usage(format!(
            "--participants must be at least 2, got {participants}"
        ));
    }
    let opts = SynthOptions {
        participants,
        mode: match mode {
            Mode::Comparative => StudyMode::Comparative,
            Mode::Benchmark => StudyMode::BenchmarkOnly,
        },
        effect,
        seed,
    };
    match synth::write(&opts, out) {
        Ok(study) => {
            println!(
                "wrote {} ({} sessions) to {}",
                study.design.study_id,
                study.sessions.len(),
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => failure(&e),
    }
}

fn serve(addr: &str, data: &Path) -> ExitCode {
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    runtime.block_on(async {
        let state = match AppState::open(data) {
            Ok(s) => s,
            Err(e) => return failure(&e),
        };
        let listener = match tokio::net::TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: cannot listen on {addr}: {e}");
                return ExitCode::from(EXIT_DATA);
            }
        };
        match state.ensure_researcher_tokens() {
            Ok(tokens) => {
                for (study, token) in tokens {
                    println!("researcher token for {study}: {token}");
                }
            }
            Err(e) => return failure(&e),
        }
        let local = listener
            .local_addr()
            .map(|a| a.to_string())
            .unwrap_or_else(|_| addr.to_owned());
        println!("listening on {local}");
        if let Err(e) = iecsi::service::serve(listener, state, shutdown_signal()).await {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
        println!("shut down");
        ExitCode::SUCCESS
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
        {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
