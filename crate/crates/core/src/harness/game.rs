//! Game rules: players alternate turns; a selection ends that player's messaging and the
//! other keeps the floor; the game ends once both have selected.

use crate::corpus::{Action, Event};
use crate::error::{Error, Result};
use crate::world::{GameContext, Player};

/// Total turns after which the player to move must select.
pub const TURN_CAP: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct Game {
    context: GameContext,
    events: Vec<Event>,
    selections: [Option<u32>; 2],
    to_move: Player,
    turn_cap: usize,
}

impl Game {
    pub fn new(context: GameContext, starter: Player) -> Self {
        Game::with_cap(context, starter, TURN_CAP)
    }

    pub fn with_cap(context: GameContext, starter: Player, turn_cap: usize) -> Self {
        Game { context, events: Vec::new(), selections: [None, None], to_move: starter, turn_cap }
    }

    pub fn context(&self) -> &GameContext {
        &self.context
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn selections(&self) -> [Option<u32>; 2] {
        self.selections
    }

    pub fn selection(&self, player: Player) -> Option<u32> {
        self.selections[player.index()]
    }

    pub fn is_over(&self) -> bool {
        self.selections.iter().all(Option::is_some)
    }

    /// The player whose move it is, or `None` once the game is over.
    pub fn to_move(&self) -> Option<Player> {
        (!self.is_over()).then_some(self.to_move)
    }

    /// Whether the player to move may only select.
    pub fn must_select(&self) -> bool {
        self.events.len() >= self.turn_cap
    }

    pub fn success(&self) -> Option<bool> {
        match self.selections {
            [Some(a), Some(b)] => Some(a == b),
            _ => None,
        }
    }

    fn check_turn(&self, player: Player) -> Result<()> {
        if self.is_over() {
            return Err(Error::Protocol("game is over".into()));
        }
        if self.selection(player).is_some() {
            return Err(Error::Protocol(format!("player {player:?} already selected")));
        }
        if player != self.to_move {
            return Err(Error::Protocol(format!("not player {player:?}'s turn")));
        }
        Ok(())
    }

    fn pass_turn(&mut self) {
        let other = self.to_move.other();
        if self.selection(other).is_none() {
            self.to_move = other;
        }
    }

    pub fn message(&mut self, player: Player, tokens: Vec<String>) -> Result<()> {
        self.check_turn(player)?;
        if self.must_select() {
            return Err(Error::Protocol(format!("turn cap of {} reached; player {player:?} must select", self.turn_cap)));
        }
        if tokens.is_empty() {
            return Err(Error::Protocol("empty message".into()));
        }
        self.events.push(Event { speaker: player, action: Action::Message { tokens, annotations: None } });
        self.pass_turn();
        Ok(())
    }

    pub fn select(&mut self, player: Player, dot: u32) -> Result<()> {
        self.check_turn(player)?;
        if self.context.view(player).index_of(dot).is_none() {
            return Err(Error::Protocol(format!("dot {dot} is not in player {player:?}'s view")));
        }
        self.events.push(Event::select(player, dot));
        self.selections[player.index()] = Some(dot);
        self.pass_turn();
        Ok(())
    }

    /// Apply a logged event.
    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match &event.action {
            Action::Message { tokens, .. } => self.message(event.speaker, tokens.clone()),
            Action::Select { dot } => self.select(event.speaker, *dot),
        }
    }
}

/// Starting player of game `index` (A for even indices).
pub fn starter_for(index: usize) -> Player {
    if index % 2 == 0 {
        Player::A
    } else {
        Player::B
    }
}
