//! Self-play: two agents play each context under the game rules; results are stratified by
//! the number of shared dots.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::game::{starter_for, Game};
use crate::agent::{observe, select_now, take_turn, AgentAction, AgentState, Model, Policy};
use crate::corpus::Event;
use crate::encoders::vocab::{RESERVED, SELECT};
use crate::error::{Error, Result};
use crate::world::{GameContext, Player, VIEW_SIZE};

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

/// Anything that can sit at one side of the board.
pub trait GameAgent {
    /// Start a new game as `player`. Agents should only look at their own view; the full
    /// context is passed so scripted baselines can cheat.
    fn begin(&mut self, context: &GameContext, player: Player, seed: u64) -> Result<()>;

    /// Choose a move. `incoming` is the partner's message since this agent's last move
    /// (`["<SELECT>"]` if the partner selected). With `must_select`, only a selection is legal.
    fn act(&mut self, incoming: Option<&[String]>, must_select: bool) -> Result<AgentAction>;
}

/// A trained model behind a turn policy.
pub struct ModelAgent {
    model: Arc<Model>,
    policy: Policy,
    state: Option<AgentState>,
    rng: ChaCha8Rng,
}

impl ModelAgent {
    pub fn new(model: Arc<Model>, policy: Policy) -> Self {
        ModelAgent { model, policy, state: None, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn state(&self) -> Option<&AgentState> {
        self.state.as_ref()
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn set_policy(&mut self, policy: Policy) {
        self.policy = policy;
    }
}

impl GameAgent for ModelAgent {
    fn begin(&mut self, context: &GameContext, player: Player, seed: u64) -> Result<()> {
        self.state = Some(AgentState::new(&self.model, context.view(player).clone()));
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn act(&mut self, incoming: Option<&[String]>, must_select: bool) -> Result<AgentAction> {
        let state = self.state.as_ref().ok_or_else(|| Error::Protocol("act before begin".into()))?;
        let (action, next) = if must_select {
            let observed = match incoming {
                Some(tokens) => observe(&self.model, state, tokens)?.0,
                None => state.clone(),
            };
            let (dot, next) = select_now(&self.model, &observed)?;
            (AgentAction::Select(dot), next)
        } else {
            let out = take_turn(&self.model, state, incoming, &self.policy, &mut self.rng)?;
            (out.action, out.state)
        };
        self.state = Some(next);
        Ok(action)
    }
}

/// Cheating baseline: selects the lowest-id shared dot on its first move.
#[derive(Clone, Debug, Default)]
pub struct OracleAgent {
    choice: Option<u32>,
}

impl GameAgent for OracleAgent {
    fn begin(&mut self, context: &GameContext, _player: Player, _seed: u64) -> Result<()> {
        self.choice = context.shared_ids.iter().next().copied();
        Ok(())
    }

    fn act(&mut self, _incoming: Option<&[String]>, _must_select: bool) -> Result<AgentAction> {
        self.choice.map(AgentAction::Select).ok_or_else(|| Error::Protocol("act before begin".into()))
    }
}

/// Selects a uniformly random dot of its own view on its first move.
#[derive(Clone, Debug, Default)]
pub struct RandomSelector {
    ids: Vec<u32>,
    rng: Option<ChaCha8Rng>,
}

impl GameAgent for RandomSelector {
    fn begin(&mut self, context: &GameContext, player: Player, seed: u64) -> Result<()> {
        self.ids = context.view(player).ids();
        self.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        Ok(())
    }

    fn act(&mut self, _incoming: Option<&[String]>, _must_select: bool) -> Result<AgentAction> {
        let rng = self.rng.as_mut().ok_or_else(|| Error::Protocol("act before begin".into()))?;
        Ok(AgentAction::Select(self.ids[rng.random_range(0..self.ids.len())]))
    }
}

/// Success rate of two independent uniform selectors: `shared / 49`.
pub fn random_success_rate(shared: usize) -> f64 {
    shared as f64 / (VIEW_SIZE * VIEW_SIZE) as f64
}

/// One played game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema_version: u32,
    pub game: usize,
    pub context: GameContext,
    pub starter: Player,
    pub events: Vec<Event>,
    pub selections: [Option<u32>; 2],
    pub success: bool,
    /// Diagnostic when the game was aborted by a protocol violation or agent error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl Transcript {
    pub fn from_game(index: usize, game: &Game, starter: Player, aborted: Option<String>) -> Self {
        Transcript {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            game: index,
            context: game.context().clone(),
            starter,
            events: game.events().to_vec(),
            selections: game.selections(),
            success: aborted.is_none() && game.success() == Some(true),
            aborted,
        }
    }

    /// Replay the events under the game rules and check the recorded outcome.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != TRANSCRIPT_SCHEMA_VERSION {
            return Err(Error::InvalidRecord(format!("unsupported transcript schema_version {}", self.schema_version)));
        }
        self.context.validate()?;
        let mut game = Game::new(self.context.clone(), self.starter);
        for (i, e) in self.events.iter().enumerate() {
            game.apply(e).map_err(|err| Error::InvalidRecord(format!("game {} event {i}: {err}", self.game)))?;
        }
        if game.selections() != self.selections {
            return Err(Error::InvalidRecord(format!("game {}: recorded selections disagree with events", self.game)));
        }
        match (&self.aborted, game.success()) {
            (None, None) => Err(Error::InvalidRecord(format!("game {} ended without both selections", self.game))),
            (None, Some(s)) if s != self.success => Err(Error::InvalidRecord(format!("game {}: success flag disagrees with selections", self.game))),
            (Some(_), _) if self.success => Err(Error::InvalidRecord(format!("game {}: aborted game marked successful", self.game))),
            _ => Ok(()),
        }
    }
}

/// Per-side seed of game `index`.
pub fn game_seed(seed: u64, index: usize, player: Player) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64 + player.index() as u64);
    rng.random()
}

fn apply_action(game: &mut Game, player: Player, action: &AgentAction) -> Result<Vec<String>> {
    match action {
        AgentAction::Message(words) => {
            game.message(player, words.clone())?;
            Ok(words.clone())
        }
        AgentAction::Select(dot) => {
            game.select(player, *dot)?;
            Ok(vec![RESERVED[SELECT].to_string()])
        }
    }
}

/// Play one game to completion. Agent errors and illegal moves abort the game as a failure.
pub fn play_game(a: &mut dyn GameAgent, b: &mut dyn GameAgent, context: &GameContext, index: usize, seed: u64) -> Transcript {
    let starter = starter_for(index);
    let mut game = Game::new(context.clone(), starter);
    let mut pending: [Option<Vec<String>>; 2] = [None, None];
    let begin = a.begin(context, Player::A, game_seed(seed, index, Player::A)).and_then(|_| b.begin(context, Player::B, game_seed(seed, index, Player::B)));
    if let Err(e) = begin {
        return Transcript::from_game(index, &game, starter, Some(e.to_string()));
    }
    while let Some(player) = game.to_move() {
        let agent: &mut dyn GameAgent = match player {
            Player::A => &mut *a,
            Player::B => &mut *b,
        };
        let incoming = pending[player.index()].take();
        let result = agent.act(incoming.as_deref(), game.must_select()).and_then(|action| apply_action(&mut game, player, &action));
        match result {
            Ok(words) => pending[player.other().index()] = Some(words),
            Err(e) => return Transcript::from_game(index, &game, starter, Some(format!("player {player:?}: {e}"))),
        }
    }
    Transcript::from_game(index, &game, starter, None)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub games: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfPlayReport {
    pub schema_version: u32,
    pub seed: u64,
    pub games: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub aborted: usize,
    /// Keyed by shared-dot count.
    pub strata: BTreeMap<usize, StratumStats>,
    /// Events per game.
    pub lengths: Vec<usize>,
    #[serde(skip)]
    pub transcripts: Vec<Transcript>,
}

impl SelfPlayReport {
    pub fn from_transcripts(seed: u64, transcripts: Vec<Transcript>) -> Self {
        let mut strata: BTreeMap<usize, StratumStats> = BTreeMap::new();
        for t in &transcripts {
            let s = strata.entry(t.context.shared_count()).or_default();
            s.games += 1;
            s.successes += usize::from(t.success);
            s.mean_length += t.events.len() as f64;
        }
        for s in strata.values_mut() {
            s.success_rate = s.successes as f64 / s.games as f64;
            s.mean_length /= s.games as f64;
        }
        let successes = transcripts.iter().filter(|t| t.success).count();
        SelfPlayReport {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            seed,
            games: transcripts.len(),
            successes,
            success_rate: if transcripts.is_empty() { 0.0 } else { successes as f64 / transcripts.len() as f64 },
            aborted: transcripts.iter().filter(|t| t.aborted.is_some()).count(),
            strata,
            lengths: transcripts.iter().map(|t| t.events.len()).collect(),
            transcripts,
        }
    }
}

/// Play every context once; the starting player alternates across games.
pub fn run_selfplay(a: &mut dyn GameAgent, b: &mut dyn GameAgent, contexts: &[GameContext], seed: u64) -> SelfPlayReport {
    let transcripts = contexts.iter().enumerate().map(|(i, c)| play_game(a, b, c, i, seed)).collect();
    SelfPlayReport::from_transcripts(seed, transcripts)
}

pub fn write_transcripts(path: &Path, transcripts: &[Transcript]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in transcripts {
        let line = serde_json::to_string(t).map_err(|e| Error::Json(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Append one transcript line.
pub fn append_transcript(path: &Path, transcript: &Transcript) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(transcript).map_err(|e| Error::Json(e.to_string()))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Read and validate a transcript file.
pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let diag = |message: String| Error::Record { path: path.display().to_string(), line: i + 1, message };
        let t: Transcript = serde_json::from_str(&line).map_err(|e| diag(e.to_string()))?;
        t.validate().map_err(|e| diag(e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}
