//! One human-vs-agent game. Transport-agnostic: frames in, frames out.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use onecommon::agent::{AgentAction, Policy};
use onecommon::encoders::tokenize;
use onecommon::encoders::vocab::{RESERVED, SELECT};
use onecommon::harness::{append_transcript, game_seed, starter_for, Game, GameAgent, ModelAgent, Transcript};
use onecommon::world::{GameContext, Player};

use crate::protocol::{view_frame, ClientFrame, Selections, ServerFrame, PROTOCOL_SCHEMA_VERSION};

/// The human always plays A; the starting side alternates across sessions.
pub const HUMAN: Player = Player::A;
pub const AGENT: Player = Player::B;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Waiting,
    Playing,
    Done,
}

#[derive(Clone, Debug, Default)]
pub struct SessionConfig {
    /// Selections are refused for this long after joining.
    pub select_lockout: Duration,
    pub seed: u64,
}

/// Serialized appends to a transcript JSONL file shared by all sessions.
#[derive(Debug)]
pub struct TranscriptLog {
    path: PathBuf,
    lock: Mutex<()>,
}

impl TranscriptLog {
    pub fn new(path: PathBuf) -> Self {
        TranscriptLog { path, lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &std::path::Path {
        &self.path
    }

    pub fn append(&self, t: &Transcript) -> onecommon::Result<()> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        append_transcript(&self.path, t)
    }
}

/// A model agent whose pragmatic search is cut to `N_u = 50` once a turn overruns the budget.
pub struct BudgetedAgent {
    inner: ModelAgent,
    budget: Duration,
}

pub const REDUCED_SAMPLES: usize = 50;

impl BudgetedAgent {
    pub fn new(inner: ModelAgent, budget: Duration) -> Self {
        BudgetedAgent { inner, budget }
    }

    pub fn policy(&self) -> &Policy {
        self.inner.policy()
    }
}

impl GameAgent for BudgetedAgent {
    fn begin(&mut self, context: &GameContext, player: Player, seed: u64) -> onecommon::Result<()> {
        self.inner.begin(context, player, seed)
    }

    fn act(&mut self, incoming: Option<&[String]>, must_select: bool) -> onecommon::Result<AgentAction> {
        let started = Instant::now();
        let action = self.inner.act(incoming, must_select)?;
        if started.elapsed() > self.budget {
            if let Policy::Pragmatic(cfg) = self.inner.policy() {
                if cfg.n_u > REDUCED_SAMPLES {
                    let mut cfg = cfg.clone();
                    cfg.n_u = REDUCED_SAMPLES;
                    self.inner.set_policy(Policy::Pragmatic(cfg));
                }
            }
        }
        Ok(action)
    }
}

pub struct Session {
    id: String,
    index: usize,
    game: Game,
    starter: Player,
    agent: Box<dyn GameAgent + Send>,
    phase: Phase,
    config: SessionConfig,
    joined_at: Option<Instant>,
    /// Human words (or a selection marker) the agent has not seen yet.
    pending: Option<Vec<String>>,
    aborted: Option<String>,
    log: Option<Arc<TranscriptLog>>,
}

impl Session {
    pub fn new(index: usize, context: GameContext, agent: Box<dyn GameAgent + Send>, config: SessionConfig, log: Option<Arc<TranscriptLog>>) -> Self {
        let starter = starter_for(index);
        Session {
            id: format!("s{index}"),
            index,
            game: Game::new(context, starter),
            starter,
            agent,
            phase: Phase::Waiting,
            config,
            joined_at: None,
            pending: None,
            aborted: None,
            log,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn transcript(&self) -> Transcript {
        Transcript::from_game(self.index, &self.game, self.starter, self.aborted.clone())
    }

    pub fn handle(&mut self, frame: ClientFrame) -> Vec<ServerFrame> {
        match (self.phase, frame) {
            (Phase::Waiting, ClientFrame::Join) => self.join(),
            (Phase::Waiting, _) => vec![ServerFrame::error("join first")],
            (Phase::Playing, ClientFrame::Join) => vec![ServerFrame::error("already joined")],
            (Phase::Done, _) => vec![ServerFrame::error("game is over")],
            (Phase::Playing, ClientFrame::Message { text }) => self.human_message(&text),
            (Phase::Playing, ClientFrame::Select { dot_id }) => self.human_select(dot_id),
        }
    }

    fn join(&mut self) -> Vec<ServerFrame> {
        self.phase = Phase::Playing;
        self.joined_at = Some(Instant::now());
        let mut out = vec![ServerFrame::Context {
            schema_version: PROTOCOL_SCHEMA_VERSION,
            session_id: self.id.clone(),
            view: view_frame(self.game.context().view(HUMAN)),
        }];
        let context = self.game.context().clone();
        if let Err(e) = self.agent.begin(&context, AGENT, game_seed(self.config.seed, self.index, AGENT)) {
            return self.abort(out, format!("agent failed to start: {e}"));
        }
        self.run_agent(out.as_mut());
        self.finish_turn(out)
    }

    fn human_turn_check(&self) -> Option<ServerFrame> {
        (self.game.to_move() != Some(HUMAN)).then(|| ServerFrame::error("not your turn"))
    }

    fn human_message(&mut self, text: &str) -> Vec<ServerFrame> {
        if let Some(e) = self.human_turn_check() {
            return vec![e];
        }
        if self.game.must_select() {
            return vec![ServerFrame::error("turn limit reached: select a dot")];
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return vec![ServerFrame::error("empty message")];
        }
        if tokens.iter().any(|t| RESERVED.iter().any(|r| t.eq_ignore_ascii_case(r))) {
            return vec![ServerFrame::error("reserved token in message; use a select frame to choose a dot")];
        }
        if let Err(e) = self.game.message(HUMAN, tokens.clone()) {
            return vec![ServerFrame::error(e.to_string())];
        }
        self.pending = Some(tokens);
        let mut out = Vec::new();
        self.run_agent(&mut out);
        self.finish_turn(out)
    }

    fn human_select(&mut self, dot_id: u32) -> Vec<ServerFrame> {
        if let Some(e) = self.human_turn_check() {
            return vec![e];
        }
        if self.game.context().view(HUMAN).index_of(dot_id).is_none() {
            return vec![ServerFrame::error(format!("dot {dot_id} is not in your view"))];
        }
        if let Some(joined) = self.joined_at {
            let elapsed = joined.elapsed();
            if elapsed < self.config.select_lockout {
                return vec![ServerFrame::error(format!("selection opens in {}s", (self.config.select_lockout - elapsed).as_secs() + 1))];
            }
        }
        if let Err(e) = self.game.select(HUMAN, dot_id) {
            return vec![ServerFrame::error(e.to_string())];
        }
        self.pending = Some(vec![RESERVED[SELECT].to_string()]);
        let mut out = Vec::new();
        self.run_agent(&mut out);
        self.finish_turn(out)
    }

    /// Let the agent move until the floor returns to the human or the game ends.
    fn run_agent(&mut self, out: &mut Vec<ServerFrame>) {
        while self.aborted.is_none() && self.game.to_move() == Some(AGENT) {
            let incoming = self.pending.take();
            let action = self.agent.act(incoming.as_deref(), self.game.must_select());
            let applied = action.and_then(|a| match a {
                AgentAction::Message(words) => {
                    let text = words.join(" ");
                    self.game.message(AGENT, words).map(|_| ServerFrame::PartnerMessage { text })
                }
                AgentAction::Select(dot) => self.game.select(AGENT, dot).map(|_| ServerFrame::PartnerSelected),
            });
            match applied {
                Ok(frame) => out.push(frame),
                Err(e) => self.aborted = Some(format!("agent error: {e}")),
            }
        }
    }

    fn finish_turn(&mut self, out: Vec<ServerFrame>) -> Vec<ServerFrame> {
        if let Some(reason) = self.aborted.clone() {
            return self.abort(out, reason);
        }
        if self.game.is_over() {
            return self.end(out);
        }
        let mut out = out;
        out.push(ServerFrame::YourTurn { must_select: self.game.must_select() });
        out
    }

    fn abort(&mut self, out: Vec<ServerFrame>, reason: String) -> Vec<ServerFrame> {
        self.aborted = Some(reason);
        self.end(out)
    }

    fn end(&mut self, mut out: Vec<ServerFrame>) -> Vec<ServerFrame> {
        self.phase = Phase::Done;
        let transcript = self.transcript();
        if let Some(log) = &self.log {
            if let Err(e) = log.append(&transcript) {
                out.push(ServerFrame::error(format!("transcript not saved: {e}")));
            }
        }
        out.push(ServerFrame::GameOver {
            success: transcript.success,
            both_selections: Selections { human: self.game.selection(HUMAN), agent: self.game.selection(AGENT) },
            aborted: self.aborted.clone(),
        });
        out
    }
}
