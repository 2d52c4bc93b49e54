//! Implementations behind the `onecommon-agent` subcommands. Each returns a JSON report and
//! a one-line human summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context as _};
use onecommon::agent::{Ablation, Model, ModelConfig, Policy};
use onecommon::corpus::{build_vocab, make_splits, read_records, synth_corpus, synth_for_contexts, write_records, GrammarConfig};
use onecommon::harness::{eval_corpus, run_selfplay, write_transcripts, ModelAgent};
use onecommon::pragmatics::PragConfig;
use onecommon::training::{train, TrainConfig};
use onecommon::world::{read_contexts, sample_context, write_contexts, GameContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::server::{serve, AgentFactory, ServerState};
use crate::session::{BudgetedAgent, SessionConfig, TranscriptLog};

pub const CHECKPOINT_ENV: &str = "ONECOMMON_CHECKPOINT";
pub const STRATA: [usize; 3] = [4, 5, 6];

pub struct Outcome {
    pub report: Value,
    pub summary: String,
}

/// `n` contexts; with `shared = None` the strata 4, 5, 6 are interleaved.
pub fn make_contexts(n: usize, shared: Option<usize>, seed: u64) -> anyhow::Result<Vec<GameContext>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let s = shared.unwrap_or(STRATA[i % STRATA.len()]);
            Ok(sample_context(rng.random(), s)?)
        })
        .collect()
}

fn strata_counts(contexts: &[GameContext]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for c in contexts {
        *m.entry(c.shared_count()).or_insert(0) += 1;
    }
    m
}

pub fn gen_contexts(n: usize, shared: Option<usize>, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    if let Some(s) = shared {
        if !STRATA.contains(&s) {
            bail!("--shared must be 4, 5 or 6");
        }
    }
    let contexts = make_contexts(n, shared, seed)?;
    write_contexts(out, &contexts)?;
    let strata = strata_counts(&contexts);
    Ok(Outcome { summary: format!("wrote {n} contexts to {} (strata {strata:?})", out.display()), report: json!({ "contexts": n, "seed": seed, "strata": strata, "out": out }) })
}

pub fn synth(contexts: Option<&Path>, n: usize, seed: u64, out: &Path) -> anyhow::Result<Outcome> {
    let cfg = GrammarConfig::default();
    let records = match contexts {
        Some(p) => synth_for_contexts(&read_contexts(p)?, seed, &cfg)?,
        None => synth_corpus(n, seed, &cfg)?,
    };
    write_records(out, &records)?;
    let messages: usize = records.iter().map(|r| r.messages().count()).sum();
    Ok(Outcome {
        summary: format!("wrote {} dialogues ({messages} messages) to {}", records.len(), out.display()),
        report: json!({ "dialogues": records.len(), "messages": messages, "seed": seed, "out": out }),
    })
}

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    pub fold: usize,
    pub folds: usize,
    pub preset: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub no_memory: bool,
    pub no_structure: bool,
    pub out: PathBuf,
}

pub fn model_preset(name: &str) -> anyhow::Result<ModelConfig> {
    Ok(match name {
        "large" => ModelConfig::large(),
        "desk" => ModelConfig::desk(),
        "tiny" => ModelConfig::tiny(),
        other => bail!("unknown preset {other:?} (large, desk, tiny)"),
    })
}

pub fn train_cmd(args: &TrainArgs, mut progress: impl FnMut(&str)) -> anyhow::Result<Outcome> {
    let records = read_records(&args.corpus)?;
    let splits = make_splits(&records, args.folds, args.seed)?;
    let split = splits.get(args.fold).with_context(|| format!("fold {} out of range for {} folds", args.fold, args.folds))?;
    let ablation = Ablation { disable_memory: args.no_memory, disable_structure: args.no_structure };
    let cfg = TrainConfig { epochs: args.epochs, learning_rate: args.learning_rate, seed: args.seed, fold: args.fold, ablation, ..Default::default() };
    let preset = model_preset(&args.preset)?;
    let (model, report) = train(split, &preset, &cfg, |e| progress(&format!("epoch {} train {:.3} validation {:.3} lr {:.1e}", e.epoch, e.train.total, e.validation.total, e.learning_rate)))?;
    model.save(&args.out)?;
    Ok(Outcome {
        summary: format!("trained {} epochs on {} dialogues, best validation {:.3} at epoch {}; saved {}", report.epochs.len(), split.train.len(), report.best_validation(), report.best_epoch, args.out.display()),
        report: json!({ "checkpoint": args.out, "fold": args.fold, "train": split.train.len(), "validation": split.validation.len(), "test": split.test.len(), "config": cfg, "report": report }),
    })
}

/// Explicit path, else the environment override.
pub fn resolve_checkpoint(arg: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    arg.or_else(|| std::env::var_os(CHECKPOINT_ENV).map(PathBuf::from)).with_context(|| format!("no checkpoint: pass --checkpoint or set {CHECKPOINT_ENV}"))
}

pub fn load_model(path: &Path) -> anyhow::Result<Model> {
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn eval_cmd(checkpoint: &Path, corpus: &Path, fold: Option<(usize, usize, u64)>) -> anyhow::Result<Outcome> {
    let model = load_model(checkpoint)?;
    let records = read_records(corpus)?;
    let records = match fold {
        Some((fold, folds, seed)) => make_splits(&records, folds, seed)?.into_iter().nth(fold).context("fold out of range")?.test,
        None => records,
    };
    let m = eval_corpus(&model, &records)?;
    Ok(Outcome {
        summary: format!(
            "{} dialogues: choice {:.3}, resolution acc {:.3} / exact {:.3}, partner acc {:.3} / exact {:.3}, next mention exact {:.3}",
            records.len(),
            m.choice_accuracy,
            m.ref_resolution_dot_accuracy,
            m.ref_resolution_exact_match,
            m.partner_ref_accuracy,
            m.partner_ref_exact,
            m.next_mention_exact
        ),
        report: serde_json::to_value(m)?,
    })
}

pub fn policy(pragmatic: bool) -> Policy {
    if pragmatic {
        Policy::Pragmatic(PragConfig::default())
    } else {
        Policy::Greedy
    }
}

pub struct SelfPlayArgs {
    pub checkpoint: PathBuf,
    pub contexts: Option<PathBuf>,
    pub per_stratum: usize,
    pub context_seed: u64,
    pub pragmatic: bool,
    pub seed: u64,
    pub transcripts: Option<PathBuf>,
}

pub fn selfplay_cmd(args: &SelfPlayArgs) -> anyhow::Result<Outcome> {
    let model = Arc::new(load_model(&args.checkpoint)?);
    let contexts = match &args.contexts {
        Some(p) => read_contexts(p)?,
        None => make_contexts(args.per_stratum * STRATA.len(), None, args.context_seed)?,
    };
    let mut a = ModelAgent::new(model.clone(), policy(args.pragmatic));
    let mut b = ModelAgent::new(model, policy(args.pragmatic));
    let report = run_selfplay(&mut a, &mut b, &contexts, args.seed);
    if let Some(p) = &args.transcripts {
        write_transcripts(p, &report.transcripts)?;
    }
    let strata: Vec<String> = report.strata.iter().map(|(k, s)| format!("shared={k}: {:.1}%", 100.0 * s.success_rate)).collect();
    Ok(Outcome {
        summary: format!("{} games, success {:.1}% ({}), aborted {}", report.games, 100.0 * report.success_rate, strata.join(", "), report.aborted),
        report: serde_json::to_value(&report)?,
    })
}

pub fn convert_cmd(transcripts: &Path, markables: Option<&Path>, referents: Option<&Path>, out: &Path) -> anyhow::Result<Outcome> {
    let read = |p: &Path| -> anyhow::Result<Value> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    };
    let t = read(transcripts)?;
    let m = markables.map(read).transpose()?;
    let r = referents.map(read).transpose()?;
    let (records, report) = onecommon::corpus::upstream::convert(&t, m.as_ref(), r.as_ref());
    write_records(out, &records)?;
    let skipped: Vec<Value> = report.skipped.iter().map(|(id, why)| json!({ "id": id, "reason": why })).collect();
    Ok(Outcome {
        summary: format!("converted {} dialogues, skipped {}; wrote {}", report.converted, report.skipped.len(), out.display()),
        report: json!({ "converted": report.converted, "skipped": skipped, "out": out }),
    })
}

pub fn vocab_cmd(corpus: &Path, out: &Path) -> anyhow::Result<Outcome> {
    let vocab = build_vocab(&read_records(corpus)?);
    vocab.write(out)?;
    Ok(Outcome { summary: format!("vocabulary of {} tokens written to {}", vocab.len(), out.display()), report: json!({ "tokens": vocab.len(), "out": out }) })
}

pub struct ServeArgs {
    pub checkpoint: PathBuf,
    pub port: u16,
    pub host: String,
    pub contexts: Option<PathBuf>,
    pub transcripts: PathBuf,
    pub lockout_secs: u64,
    pub budget_ms: u64,
    pub greedy: bool,
    pub seed: u64,
}

pub async fn serve_cmd(args: ServeArgs) -> anyhow::Result<()> {
    let model = Arc::new(load_model(&args.checkpoint)?);
    let contexts = match &args.contexts {
        Some(p) => read_contexts(p)?,
        None => make_contexts(300, None, args.seed)?,
    };
    let budget = Duration::from_millis(args.budget_ms);
    let pragmatic = !args.greedy;
    let agents: AgentFactory = Arc::new(move || Box::new(BudgetedAgent::new(ModelAgent::new(model.clone(), policy(pragmatic)), budget)));
    let config = SessionConfig { select_lockout: Duration::from_secs(args.lockout_secs), seed: args.seed };
    let state = ServerState::new(contexts, agents, config, Some(Arc::new(TranscriptLog::new(args.transcripts))))?;
    let addr = format!("{}:{}", args.host, args.port).parse().context("invalid host or port")?;
    serve(addr, state).await
}
