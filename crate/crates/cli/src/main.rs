mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgsearch::llm::LlmBackend;
use kgsearch::pipeline::ModuleToggles;

use commands::{AskMode, EvalArgs};
use config::AppConfig;
use error::CliError;

/// Multi-hop question answering over a graph knowledge base.
#[derive(Debug, Parser)]
#[command(name = "kgsearch", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    /// Replay LLM responses from this transcript instead of calling a server.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    /// With --transcript: fail when a prompt differs from the recorded one.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    max_rounds: Option<u32>,
    /// Enabled modules, e.g. "qd,cr" or "all".
    #[arg(long, global = true)]
    toggles: Option<String>,
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the knowledge base and embeddings from a JSONL corpus.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Answer one question.
    Ask {
        question: String,
        #[arg(long, value_enum, default_value = "deepsearch")]
        mode: AskMode,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Golden evidence sentence; repeat to report recall.
        #[arg(long = "evidence")]
        evidence: Vec<String>,
    },
    /// Run a QA dataset and write reports.
    Eval {
        dataset: PathBuf,
        /// Module set for this run, e.g. "qd,cr".
        #[arg(long)]
        ablation: Option<String>,
        /// Also run the single-round baseline.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        baseline_transcript: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the timeline of a saved trace.
    TraceShow { trace: PathBuf },
}

fn load_config(cli: &Cli) -> Result<AppConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    if let Some(dir) = &cli.index_dir {
        cfg.index_dir = dir.clone();
    }
    if let Some(t) = &cli.transcript {
        cfg.llm.backend = LlmBackend::Scripted;
        cfg.llm.transcript = Some(t.clone());
        cfg.llm.temperature = 0.0;
    }
    if cli.strict {
        cfg.llm.strict = true;
    }
    if let Some(k) = cli.top_k {
        cfg.retriever.top_k = k;
    }
    if let Some(r) = cli.max_rounds {
        cfg.budget.max_rounds = r;
    }
    if let Some(set) = &cli.toggles {
        cfg.toggles = ModuleToggles::parse_set(set).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::Index { corpus: Some(c) } = &cli.command {
        cfg.corpus_path = Some(c.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    if let Command::TraceShow { trace } = &cli.command {
        return commands::trace_show(trace);
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Index { .. } => commands::index(&cfg),
        Command::Ask {
            question,
            mode,
            trace_out,
            evidence,
        } => commands::ask(&cfg, question, *mode, trace_out.as_deref(), evidence.clone()),
        Command::Eval {
            dataset,
            ablation,
            baseline,
            baseline_transcript,
            label,
            out,
        } => commands::eval(
            &cfg,
            &EvalArgs {
                dataset,
                ablation: ablation.as_deref(),
                baseline: *baseline,
                baseline_transcript: baseline_transcript.as_deref(),
                label: label.as_deref(),
                out: out.as_deref(),
            },
        ),
        Command::TraceShow { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
