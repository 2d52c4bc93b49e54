use std::path::PathBuf;

use clap::{Parser, Subcommand};
use onecommon_service::commands::{self, Outcome, SelfPlayArgs, ServeArgs, TrainArgs, CHECKPOINT_ENV};

#[derive(Parser)]
#[command(name = "onecommon-agent", version, about = "Train, evaluate and serve OneCommon dialogue agents")]
struct Cli {
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample game contexts as JSONL.
    GenContexts {
        #[arg(long)]
        n: usize,
        /// Shared-dot count (4, 5 or 6); strata are interleaved when omitted.
        #[arg(long)]
        shared: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an annotated synthetic corpus.
    SynthCorpus {
        /// Contexts JSONL to play out; otherwise fresh contexts are sampled.
        #[arg(long)]
        contexts: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on one fold of a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Model size: desk, tiny or large.
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long, default_value_t = 12)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_memory: bool,
        #[arg(long)]
        no_structure: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus metrics of a checkpoint.
    EvalCorpus {
        #[arg(long, env = CHECKPOINT_ENV)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        /// Evaluate only the test split of this fold.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Self-play a checkpoint against a copy of itself.
    Selfplay {
        #[arg(long, env = CHECKPOINT_ENV)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        contexts: Option<PathBuf>,
        /// Contexts per shared-dot stratum when --contexts is absent.
        #[arg(long, default_value_t = 100)]
        per_stratum: usize,
        #[arg(long, default_value_t = 1)]
        context_seed: u64,
        /// Use pragmatic generation.
        #[arg(long)]
        prag: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-game transcripts as JSONL.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve live games over websockets at /ws.
    Serve {
        #[arg(long, env = CHECKPOINT_ENV)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        contexts: Option<PathBuf>,
        #[arg(long, default_value = "transcripts.jsonl")]
        transcripts: PathBuf,
        /// Refuse selections for this many seconds after joining.
        #[arg(long, default_value_t = 0)]
        lockout_secs: u64,
        /// Agent turn budget; pragmatic sampling is reduced after an overrun.
        #[arg(long, default_value_t = 5000)]
        budget_ms: u64,
        /// Greedy generation instead of pragmatic.
        #[arg(long)]
        greedy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Convert released transcripts and annotations to corpus JSONL.
    Convert {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        markables: Option<PathBuf>,
        #[arg(long)]
        referents: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the vocabulary of a corpus.
    Vocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<Option<Outcome>> {
    Ok(Some(match cli.command {
        Command::GenContexts { n, shared, seed, out } => commands::gen_contexts(n, shared, seed, &out)?,
        Command::SynthCorpus { contexts, n, seed, out } => commands::synth(contexts.as_deref(), n, seed, &out)?,
        Command::Train { corpus, fold, folds, preset, epochs, lr, seed, no_memory, no_structure, out } => {
            let args = TrainArgs { corpus, fold, folds, preset, epochs, learning_rate: lr, seed, no_memory, no_structure, out };
            commands::train_cmd(&args, |line| eprintln!("{line}"))?
        }
        Command::EvalCorpus { checkpoint, corpus, fold, folds, split_seed } => {
            let checkpoint = commands::resolve_checkpoint(checkpoint)?;
            commands::eval_cmd(&checkpoint, &corpus, fold.map(|f| (f, folds, split_seed)))?
        }
        Command::Selfplay { checkpoint, contexts, per_stratum, context_seed, prag, seed, out } => {
            let checkpoint = commands::resolve_checkpoint(checkpoint)?;
            commands::selfplay_cmd(&SelfPlayArgs { checkpoint, contexts, per_stratum, context_seed, pragmatic: prag, seed, transcripts: out })?
        }
        Command::Serve { checkpoint, port, host, contexts, transcripts, lockout_secs, budget_ms, greedy, seed } => {
            let checkpoint = commands::resolve_checkpoint(checkpoint)?;
            let args = ServeArgs { checkpoint, port, host, contexts, transcripts, lockout_secs, budget_ms, greedy, seed };
            tokio::runtime::Runtime::new()?.block_on(commands::serve_cmd(args))?;
            return Ok(None);
        }
        Command::Convert { transcripts, markables, referents, out } => commands::convert_cmd(&transcripts, markables.as_deref(), referents.as_deref(), &out)?,
        Command::Vocab { corpus, out } => commands::vocab_cmd(&corpus, &out)?,
    }))
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let report_path = cli.report.clone();
    match run(cli) {
        Ok(None) => std::process::ExitCode::SUCCESS,
        Ok(Some(outcome)) => {
            let json = serde_json::to_string_pretty(&outcome.report).expect("reports serialize");
            match report_path {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, json + "\n") {
                        eprintln!("error: writing {}: {e}", p.display());
                        return std::process::ExitCode::FAILURE;
                    }
                }
                None => println!("{json}"),
            }
            eprintln!("{}", outcome.summary);
            std::process::ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
